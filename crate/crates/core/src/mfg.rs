//! Policy iteration for the coupled forward-backward system.
//!
//! Each outer iteration pushes the initial densities forward under the
//! current feedback policy, damps the resulting trajectory against the
//! previous one, and re-solves the QVI backward on it to improve the policy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{LaneArray, LaneField, SpatialGrid};
use crate::hjb::{
    resolve_backward, solve_backward, BackwardSolution, DensityPath, PolicySlice, ValueSlice,
};
use crate::problem::Problem;
use crate::transport::{forward_step, mfg_source, total_mass, VelocityField};

/// How the transport velocity is built from the backward solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftMode {
    /// `u* f(rho)` with `u*` the minimizing control.
    #[default]
    OptimalControl,
    /// `-V_x f(rho)` with a centered difference of the value.
    LiteralGradient,
}

/// How the density mixing weight evolves over outer iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DampingSchedule {
    /// `damping` at every iteration after the first.
    #[default]
    Constant,
    /// `min(damping, 1/(k+1))` at iteration k, i.e. a running average of
    /// the forward sweeps (fictitious play).
    Harmonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub max_outer_iters: usize,
    /// Fraction of (level, lane, node) cells allowed to change policy.
    pub tol_policy: f64,
    /// Sup-norm value change; `None` means `1e-6` times the domain width.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_value: Option<f64>,
    /// Weight of the new density trajectory, in `(0, 1]`.
    pub damping: f64,
    pub schedule: DampingSchedule,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_outer_iters: 50,
            tol_policy: 1e-3,
            tol_value: None,
            damping: 0.5,
            schedule: DampingSchedule::Constant,
        }
    }
}

impl SolverOptions {
    /// Mixing weight for outer iteration `k` (0-based). The first sweep
    /// replaces the frozen-ρ0 initialization outright.
    pub fn theta(&self, k: usize) -> f64 {
        match (k, self.schedule) {
            (0, _) => 1.0,
            (_, DampingSchedule::Constant) => self.damping,
            (_, DampingSchedule::Harmonic) => self.damping.min(1.0 / (k as f64 + 1.0)),
        }
    }

    pub(crate) fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.max_outer_iters == 0 {
            out.push("solver.max_outer_iters must be at least 1".to_string());
        }
        if !(0.0..=1.0).contains(&self.tol_policy) {
            out.push(format!(
                "solver.tol_policy must lie in [0, 1] (got {})",
                self.tol_policy
            ));
        }
        if let Some(v) = self.tol_value {
            if !(v >= 0.0 && v.is_finite()) {
                out.push(format!("solver.tol_value must be non-negative (got {v})"));
            }
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            out.push(format!(
                "solver.damping must lie in (0, 1] (got {})",
                self.damping
            ));
        }
        out
    }
}

/// Change between two outer iterates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    /// Fraction of (level, lane, node) cells whose control or target changed.
    pub policy_change: f64,
    /// Sup-norm change of the value function.
    pub value_change: f64,
    /// `sum |d rho| |E_i| dt` over all levels and lanes.
    pub density_change: f64,
}

/// A density trajectory with its boundary and clamping ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Densities at levels `0..=N`.
    pub rho: Vec<LaneField>,
    /// Mass that left through the boundary up to each level.
    pub cumulative_outflow: Vec<f64>,
    /// Mass added by negative-density clamping up to each level.
    pub cumulative_clamped: Vec<f64>,
}

impl Trajectory {
    /// `initial - outflow + clamped` at level `k`.
    pub fn expected_mass(&self, grid: &SpatialGrid, k: usize) -> f64 {
        total_mass(&self.rho[0], grid).total - self.cumulative_outflow[k]
            + self.cumulative_clamped[k]
    }
}

#[derive(Debug, Clone)]
pub struct MfgSolution {
    pub trajectory: Trajectory,
    pub values: Vec<ValueSlice>,
    pub policies: Vec<PolicySlice>,
    pub iterations: usize,
    pub converged: bool,
    pub residual_history: Vec<Residuals>,
}

impl MfgSolution {
    pub fn rho(&self) -> &[LaneField] {
        &self.trajectory.rho
    }
}

/// Below this density the limited speed falls back to the free speed.
const RHO_FLOOR: f64 = 1e-12;

/// Transport velocity at one level.
///
/// Both drift modes reduce to a per-node speed factor `w ≥ 0` (the control
/// level, or `−V_x` clipped at zero) applied to the flux speed f(ρ). The
/// mass sent from node j to j+1 is then capped Godunov-style by the demand
/// of j and the supply of j+1, so a stopped or jammed node downstream holds
/// traffic back instead of letting it collapse onto a single node, and a
/// node above ρ_max still discharges at capacity.
pub fn velocity(
    problem: &Problem,
    rho: &LaneField,
    policy: &PolicySlice,
    value: Option<&ValueSlice>,
) -> Result<VelocityField> {
    let (n, m) = (rho.lanes(), rho.nodes());
    let w = match problem.drift {
        DriftMode::OptimalControl => LaneArray::from_fn(n, m, |l, j| {
            problem.controls.value(policy.control[(l, j)])
        }),
        DriftMode::LiteralGradient => {
            let v = value.ok_or_else(|| {
                Error::InvalidParameter("literal-gradient drift needs value slices".into())
            })?;
            let dx = problem.grid.dx();
            LaneArray::from_fn(n, m, |l, j| {
                let lane = v.lane(l);
                let grad = if j == 0 {
                    (lane[1] - lane[0]) / dx
                } else if j + 1 == m {
                    (lane[m - 1] - lane[m - 2]) / dx
                } else {
                    (lane[j + 1] - lane[j - 1]) / (2.0 * dx)
                };
                (-grad).max(0.0)
            })
        }
    };
    let flux = &problem.flux;
    Ok(LaneArray::from_fn(n, m, |l, j| {
        let r = rho[(l, j)];
        let free = w[(l, j)] * flux.flux(r).max(0.0);
        if j + 1 == m {
            return free;
        }
        let room = w[(l, j + 1)] * flux.supply(rho[(l, j + 1)]);
        if r > RHO_FLOOR {
            (w[(l, j)] * flux.demand(r)).min(room) / r
        } else {
            free.min(room / RHO_FLOOR)
        }
    }))
}

/// Forward march from `rho0` under `policies`, calling `visit(k, rho_k)` for
/// every level `0..=N` in order. Returns cumulative (outflow, clamped) per
/// level.
fn forward_levels(
    problem: &Problem,
    policies: &[PolicySlice],
    values: &[ValueSlice],
    mut visit: impl FnMut(usize, &LaneField),
) -> Result<(Vec<f64>, Vec<f64>)> {
    let steps = problem.time.steps();
    let dt = problem.time.dt();
    let mut outflow = Vec::with_capacity(steps + 1);
    let mut clamped = Vec::with_capacity(steps + 1);
    outflow.push(0.0);
    clamped.push(0.0);
    let mut rho = problem.rho0.clone();
    visit(0, &rho);
    for k in 0..steps {
        let vel = velocity(problem, &rho, &policies[k], values.get(k))?;
        let src = mfg_source(&rho, &policies[k].target, &problem.flux)?;
        let step = forward_step(&rho, &vel, &src, &problem.grid, dt)?;
        outflow.push(outflow[k] + step.outflow);
        clamped.push(clamped[k] + step.clamped);
        rho = step.rho;
        visit(k + 1, &rho);
    }
    Ok((outflow, clamped))
}

/// Densities from `rho0` under fixed policies.
pub fn forward_solve(
    problem: &Problem,
    policies: &[PolicySlice],
    values: &[ValueSlice],
) -> Result<Trajectory> {
    if policies.len() != problem.time.steps() {
        return Err(Error::ShapeMismatch(format!(
            "{} policy levels for {} steps",
            policies.len(),
            problem.time.steps()
        )));
    }
    let mut rho = Vec::with_capacity(problem.time.steps() + 1);
    let (cumulative_outflow, cumulative_clamped) =
        forward_levels(problem, policies, values, |_, r| rho.push(r.clone()))?;
    Ok(Trajectory {
        rho,
        cumulative_outflow,
        cumulative_clamped,
    })
}

/// Starting policies: one backward solve with the initial density frozen in
/// time.
pub fn initialize_policies(problem: &Problem) -> Result<BackwardSolution> {
    solve_backward(
        DensityPath::Frozen(&problem.rho0),
        &problem.terminal(),
        &problem.hjb_params(),
    )
}

/// Residuals between two iterates given as (densities, values, policies).
pub fn residuals(
    grid: &SpatialGrid,
    dt: f64,
    prev: (&[LaneField], &[ValueSlice], &[PolicySlice]),
    next: (&[LaneField], &[ValueSlice], &[PolicySlice]),
) -> Residuals {
    let mut cells = 0usize;
    let mut changed = 0usize;
    for (a, b) in prev.2.iter().zip(next.2) {
        cells += a.control.as_slice().len();
        changed += a.count_differences(b);
    }
    let value_change = prev
        .1
        .iter()
        .zip(next.1)
        .map(|(a, b)| crate::hjb::sup_diff(a, b))
        .fold(0.0, f64::max);
    let density_change = prev
        .0
        .iter()
        .zip(next.0)
        .map(|(a, b)| density_l1(grid, a, b) * dt)
        .sum();
    Residuals {
        policy_change: if cells == 0 { 0.0 } else { changed as f64 / cells as f64 },
        value_change,
        density_change,
    }
}

fn density_l1(grid: &SpatialGrid, a: &LaneField, b: &LaneField) -> f64 {
    a.lanes_iter()
        .zip(b.lanes_iter())
        .map(|(la, lb)| {
            la.iter()
                .zip(lb)
                .enumerate()
                .map(|(i, (x, y))| (x - y).abs() * grid.cell_width(i))
                .sum::<f64>()
        })
        .sum()
}

/// Outer-loop state. Holds one value trajectory and one (damped) density
/// trajectory, both updated in place.
pub struct MfgSolver<'a> {
    problem: &'a Problem,
    backward: BackwardSolution,
    rho_in: Vec<LaneField>,
    iterations: usize,
    history: Vec<Residuals>,
}

impl<'a> MfgSolver<'a> {
    pub fn new(problem: &'a Problem) -> Result<Self> {
        let backward = initialize_policies(problem)?;
        Ok(Self {
            problem,
            backward,
            rho_in: vec![problem.rho0.clone(); problem.time.steps() + 1],
            iterations: 0,
            history: Vec::new(),
        })
    }

    pub fn policies(&self) -> &[PolicySlice] {
        &self.backward.policies
    }

    pub fn values(&self) -> &[ValueSlice] {
        &self.backward.values
    }

    /// Density trajectory the current values were computed on.
    pub fn density_input(&self) -> &[LaneField] {
        &self.rho_in
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// One forward sweep, damping, and backward sweep.
    pub fn iterate(&mut self) -> Result<Residuals> {
        let p = self.problem;
        let theta = p.options.theta(self.iterations);
        let dt = p.time.dt();
        let mut density_change = 0.0;
        {
            let rho_in = &mut self.rho_in;
            let grid = &p.grid;
            forward_levels(p, &self.backward.policies, &self.backward.values, |k, r| {
                let slot = &mut rho_in[k];
                let mut l1 = 0.0;
                for (old_lane, new_lane) in slot.lanes_iter_mut().zip(r.lanes_iter()) {
                    for (i, (o, n)) in old_lane.iter_mut().zip(new_lane).enumerate() {
                        let mixed = theta * n + (1.0 - theta) * *o;
                        l1 += (mixed - *o).abs() * grid.cell_width(i);
                        *o = mixed;
                    }
                }
                density_change += l1 * dt;
            })?;
        }
        let change = resolve_backward(
            &mut self.backward,
            DensityPath::Trajectory(&self.rho_in),
            &p.hjb_params(),
        )?;
        let cells = p.time.steps() * p.lanes() * p.grid.len();
        let res = Residuals {
            policy_change: change.policy_cells as f64 / cells as f64,
            value_change: change.value_sup,
            density_change,
        };
        self.iterations += 1;
        self.history.push(res);
        Ok(res)
    }

    pub fn is_converged(&self, res: &Residuals) -> bool {
        res.policy_change <= self.problem.options.tol_policy
            && res.value_change <= self.problem.tol_value()
    }

    /// Iterate until convergence or the iteration cap.
    pub fn run(mut self) -> Result<MfgSolution> {
        let mut converged = false;
        while self.iterations < self.problem.options.max_outer_iters {
            let res = self.iterate()?;
            log::info!(
                "outer {:>3}: policy {:.3e}  value {:.3e}  density {:.3e}",
                self.iterations,
                res.policy_change,
                res.value_change,
                res.density_change
            );
            if self.is_converged(&res) {
                converged = true;
                break;
            }
        }
        if !converged {
            log::warn!(
                "policy iteration stopped after {} iterations without converging",
                self.iterations
            );
        }
        self.finish(converged)
    }

    /// Final densities are the forward solve under the final policies.
    pub fn finish(self, converged: bool) -> Result<MfgSolution> {
        drop(self.rho_in);
        let trajectory = forward_solve(
            self.problem,
            &self.backward.policies,
            &self.backward.values,
        )?;
        Ok(MfgSolution {
            trajectory,
            values: self.backward.values,
            policies: self.backward.policies,
            iterations: self.iterations,
            converged,
            residual_history: self.history,
        })
    }
}

/// Solve the coupled system by policy iteration.
pub fn solve(problem: &Problem) -> Result<MfgSolution> {
    if problem.time.dt() * problem.flux.a > 1.0 {
        log::warn!(
            "dt * a = {:.3} > 1: exchange sinks may overshoot and positivity clamping will engage",
            problem.time.dt() * problem.flux.a
        );
    }
    MfgSolver::new(problem)?.run()
}
