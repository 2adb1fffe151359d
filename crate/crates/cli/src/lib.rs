//! Run orchestration for the `lanemfg` command: solve a scenario in MFG or
//! uncontrolled mode and write snapshots, a summary and residuals to disk.
//!
//! Output files in `out_dir`:
//!
//! * `snapshot_kNNNNN.csv`, one per requested time (nearest level `k`), with
//!   header `t,x,lane,rho,V,u,S`, one row per (lane, node), lanes 1-based and
//!   numbers in `{:.16e}`. In uncontrolled mode `V` and `u` are empty and
//!   `S` is 0. The final level reuses the policy of the last step.
//! * `summary.json`, see [`Summary`].
//! * `residuals.csv` (MFG mode), one row per outer iteration.
//! * `scenario.json`, the resolved scenario that was run.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use lanemfg::transport::total_mass;
use lanemfg::{
    solve, uncontrolled_solve, LaneField, MfgSolution, PolicySlice, Problem, Residuals, Scenario,
    Trajectory, ValueSlice,
};
use serde::Serialize;

pub const SUMMARY_FILE: &str = "summary.json";
pub const RESIDUALS_FILE: &str = "residuals.csv";
pub const SCENARIO_FILE: &str = "scenario.json";
pub const CSV_HEADER: &str = "t,x,lane,rho,V,u,S";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Mfg,
    Uncontrolled,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(lanemfg::Error),
    #[error("solver failed: {0}")]
    Solver(lanemfg::Error),
    #[error("cannot write output {path}: {source}")]
    Output { path: PathBuf, source: io::Error },
}

impl RunError {
    /// Process exit status: 1 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Solver(_) | RunError::Output { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotSummary {
    pub t: f64,
    pub level: usize,
    pub file: String,
    pub mass_per_lane: Vec<f64>,
    pub total_mass: f64,
    /// Mass that has left through the domain ends up to this level.
    pub cumulative_outflow: f64,
    /// Mass added by positivity clamping up to this level.
    pub cumulative_clamped: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mode: Mode,
    /// Outer iterations (0 in uncontrolled mode).
    pub iterations: usize,
    /// Always true in uncontrolled mode.
    pub converged: bool,
    pub residual_history: Vec<Residuals>,
    pub snapshots: Vec<SnapshotSummary>,
    pub cumulative_outflow: f64,
    pub cumulative_clamped: f64,
    pub wall_clock_seconds: f64,
}

/// Policy and value trajectories of an MFG run.
struct Controls<'a> {
    values: &'a [ValueSlice],
    policies: &'a [PolicySlice],
}

/// Solver output behind a [`Summary`].
#[derive(Debug, Clone)]
pub enum Outcome {
    Mfg(MfgSolution),
    Uncontrolled(Trajectory),
}

impl Outcome {
    pub fn trajectory(&self) -> &Trajectory {
        match self {
            Outcome::Mfg(sol) => &sol.trajectory,
            Outcome::Uncontrolled(tr) => tr,
        }
    }
}

/// Solve `scenario` and write every output file into `out_dir`.
pub fn run(scenario: &Scenario, mode: Mode, out_dir: &Path) -> Result<Summary, RunError> {
    execute(scenario, mode, out_dir).map(|(summary, _)| summary)
}

/// [`run`], also handing back the solver output.
pub fn execute(
    scenario: &Scenario,
    mode: Mode,
    out_dir: &Path,
) -> Result<(Summary, Outcome), RunError> {
    let start = Instant::now();
    let problem = scenario.to_problem().map_err(RunError::Config)?;
    fs::create_dir_all(out_dir).map_err(|source| RunError::Output {
        path: out_dir.to_path_buf(),
        source,
    })?;
    write_file(&out_dir.join(SCENARIO_FILE), scenario.to_json_string().as_bytes())?;

    let times = scenario.snapshot_times();
    let (mut summary, outcome) = match mode {
        Mode::Mfg => {
            let sol = solve(&problem).map_err(RunError::Solver)?;
            let controls = Controls {
                values: &sol.values,
                policies: &sol.policies,
            };
            let traj = &sol.trajectory;
            let snapshots =
                write_snapshots(&problem, &times, &traj.rho, Some(&controls), traj, out_dir)?;
            write_residuals(&sol.residual_history, &out_dir.join(RESIDUALS_FILE))?;
            let summary = Summary {
                mode,
                iterations: sol.iterations,
                converged: sol.converged,
                residual_history: sol.residual_history.clone(),
                snapshots,
                cumulative_outflow: *traj.cumulative_outflow.last().unwrap_or(&0.0),
                cumulative_clamped: *traj.cumulative_clamped.last().unwrap_or(&0.0),
                wall_clock_seconds: 0.0,
            };
            (summary, Outcome::Mfg(sol))
        }
        Mode::Uncontrolled => {
            let traj = uncontrolled_solve(&problem, &problem.baseline).map_err(RunError::Solver)?;
            let snapshots = write_snapshots(&problem, &times, &traj.rho, None, &traj, out_dir)?;
            let summary = Summary {
                mode,
                iterations: 0,
                converged: true,
                residual_history: Vec::new(),
                snapshots,
                cumulative_outflow: *traj.cumulative_outflow.last().unwrap_or(&0.0),
                cumulative_clamped: *traj.cumulative_clamped.last().unwrap_or(&0.0),
                wall_clock_seconds: 0.0,
            };
            (summary, Outcome::Uncontrolled(traj))
        }
    };
    summary.wall_clock_seconds = start.elapsed().as_secs_f64();
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&out_dir.join(SUMMARY_FILE), json.as_bytes())?;
    Ok((summary, outcome))
}

/// File name of the snapshot at time level `k`.
pub fn snapshot_file_name(level: usize) -> String {
    format!("snapshot_k{level:05}.csv")
}

/// CSV text of one time level.
fn snapshot_csv(problem: &Problem, level: usize, rho: &LaneField, controls: Option<&Controls>) -> String {
    let t = problem.time.time(level);
    let steps = problem.time.steps();
    let mut out = String::with_capacity(rho.as_slice().len() * 120);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for l in 0..rho.lanes() {
        for i in 0..rho.nodes() {
            let x = problem.grid.node(i);
            let _ = write!(out, "{t:.16e},{x:.16e},{},{:.16e},", l + 1, rho[(l, i)]);
            match controls {
                Some(c) => {
                    let pol = &c.policies[level.min(steps - 1)];
                    let u = problem.controls.value(pol.control[(l, i)]);
                    let _ = writeln!(
                        out,
                        "{:.16e},{u:.16e},{}",
                        c.values[level][(l, i)],
                        pol.relative_switch(l, i)
                    );
                }
                None => out.push_str(",,0\n"),
            }
        }
    }
    out
}

fn write_snapshots(
    problem: &Problem,
    times: &[f64],
    rho: &[LaneField],
    controls: Option<&Controls>,
    traj: &Trajectory,
    out_dir: &Path,
) -> Result<Vec<SnapshotSummary>, RunError> {
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let level = problem.time.nearest_level(t);
        let file = snapshot_file_name(level);
        let csv = snapshot_csv(problem, level, &rho[level], controls);
        write_file(&out_dir.join(&file), csv.as_bytes())?;
        let mass = total_mass(&rho[level], &problem.grid);
        out.push(SnapshotSummary {
            t: problem.time.time(level),
            level,
            file,
            mass_per_lane: mass.per_lane,
            total_mass: mass.total,
            cumulative_outflow: traj.cumulative_outflow[level],
            cumulative_clamped: traj.cumulative_clamped[level],
        });
    }
    Ok(out)
}

fn write_residuals(history: &[Residuals], path: &Path) -> Result<(), RunError> {
    let mut text = String::from("iteration,policy_change,value_change,density_change\n");
    for (k, r) in history.iter().enumerate() {
        let _ = writeln!(
            text,
            "{},{:.16e},{:.16e},{:.16e}",
            k + 1,
            r.policy_change,
            r.value_change,
            r.density_change
        );
    }
    write_file(path, text.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let wrap = |source| RunError::Output {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(fs::File::create(path).map_err(wrap)?);
    w.write_all(bytes).map_err(wrap)?;
    w.flush().map_err(wrap)
}
