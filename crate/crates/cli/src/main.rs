use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::Parser;
use lanemfg::{DampingSchedule, DriftMode, Scenario};
use lanemfg_cli::{run, Mode};

/// Multi-lane traffic mean-field-game solver.
#[derive(Debug, Parser)]
#[command(name = "lanemfg", version)]
struct Args {
    /// Scenario file (JSON).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario: paper-sec6 or paper-sec6-coarse.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, value_enum, default_value = "mfg")]
    mode: Mode,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Snapshot times, comma separated (default: 0, T/2, T).
    #[arg(long, value_delimiter = ',')]
    snapshots: Option<Vec<f64>>,
    #[arg(long)]
    max_outer_iters: Option<usize>,
    #[arg(long)]
    tol_policy: Option<f64>,
    #[arg(long)]
    tol_value: Option<f64>,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long, value_parser = parse_schedule)]
    schedule: Option<DampingSchedule>,
    #[arg(long, value_parser = parse_drift)]
    drift: Option<DriftMode>,
}

fn parse_drift(s: &str) -> Result<DriftMode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| "expected optimal-control or literal-gradient".to_string())
}

fn parse_schedule(s: &str) -> Result<DampingSchedule, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| "expected constant or harmonic".to_string())
}

fn scenario(args: &Args) -> anyhow::Result<Scenario> {
    let mut s = match (&args.config, &args.preset) {
        (Some(path), _) => {
            Scenario::load(path).with_context(|| format!("reading {}", path.display()))?
        }
        (None, Some(name)) => Scenario::preset(name).ok_or_else(|| {
            anyhow!(
                "unknown preset {name:?} (available: {})",
                Scenario::preset_names().join(", ")
            )
        })?,
        (None, None) => unreachable!("clap requires --config or --preset"),
    };
    if let Some(t) = &args.snapshots {
        s.snapshots = Some(t.clone());
    }
    if let Some(v) = args.max_outer_iters {
        s.solver.max_outer_iters = v;
    }
    if let Some(v) = args.tol_policy {
        s.solver.tol_policy = v;
    }
    if let Some(v) = args.tol_value {
        s.solver.tol_value = Some(v);
    }
    if let Some(v) = args.damping {
        s.solver.damping = v;
    }
    if let Some(v) = args.schedule {
        s.solver.schedule = v;
    }
    if let Some(v) = args.drift {
        s.drift = v;
    }
    s.validate()?;
    Ok(s)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            // usage errors are configuration errors; --help and --version are not
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let scenario = match scenario(&args) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    match run(&scenario, args.mode, &args.out_dir) {
        Ok(summary) => {
            if !summary.converged {
                log::warn!("not converged after {} outer iterations", summary.iterations);
            }
            println!(
                "wrote {} snapshots to {} in {:.2} s (iterations {}, converged {})",
                summary.snapshots.len(),
                args.out_dir.display(),
                summary.wall_clock_seconds,
                summary.iterations,
                summary.converged
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
