//! Scenario files: a strict JSON schema, built-in presets, validation and
//! conversion into a discretized [`Problem`].
//!
//! ```json
//! {
//!   "lanes": 3,
//!   "domain": [0.0, 25.0],
//!   "horizon": 25.0,
//!   "nodes": 501,
//!   "steps": 500,
//!   "flux": { "a": 3.0, "b": 1.0, "rho_max": 1.0 },
//!   "cost": { "kappa": 1.0, "epsilon": 1e-5 },
//!   "controls": [0.0, 0.5, 1.0],
//!   "target": [[25.0, 1], [25.0, 2], [25.0, 3]],
//!   "initial_density": "staggered-gaussians",
//!   "drift": "optimal-control",
//!   "solver": { "max_outer_iters": 50, "tol_policy": 1e-3, "damping": 0.5, "schedule": "harmonic" },
//!   "snapshots": [0.0, 10.0, 25.0]
//! }
//! ```
//!
//! `initial_density` is either a preset name or one array of `[x, rho]`
//! samples per lane (P1 interpolation, constant beyond the first and last
//! sample). `baseline` (`t_left`, `t_right` per lane) configures the
//! uncontrolled mode and defaults to unit relaxation times. `lane_flux` is
//! reserved for per-lane fundamental diagrams and is rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baseline::BaselineParams;
use crate::error::{Error, Result};
use crate::grid::{LaneArray, SpatialGrid, TimeGrid};
use crate::hjb::ControlSet;
use crate::mfg::{DampingSchedule, DriftMode, SolverOptions};
use crate::model::{CostParams, FluxParams, TargetSet};
use crate::problem::Problem;

/// Preset with the full-resolution three-lane experiment.
pub const PRESET_SEC6: &str = "paper-sec6";
/// Same experiment with `dx = 0.05`, `dt = 0.05`.
pub const PRESET_SEC6_COARSE: &str = "paper-sec6-coarse";

/// Density preset: `exp(-(x - 2 l)^2) / 2` on lane `l = 1..n`.
pub const DENSITY_STAGGERED: &str = "staggered-gaussians";
/// Density preset: empty road.
pub const DENSITY_ZERO: &str = "zero";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialDensity {
    Preset(String),
    Samples(Vec<Vec<[f64; 2]>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub lanes: usize,
    pub domain: [f64; 2],
    pub horizon: f64,
    pub nodes: usize,
    pub steps: usize,
    pub flux: FluxParams,
    pub cost: CostParams,
    pub controls: ControlSet,
    pub target: TargetSet,
    pub initial_density: InitialDensity,
    #[serde(default)]
    pub drift: DriftMode,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lane_flux: Option<Vec<FluxParams>>,
}

impl Scenario {
    /// Built-in presets by name.
    pub fn preset(name: &str) -> Option<Self> {
        let (nodes, steps) = match name {
            PRESET_SEC6 => (5001, 2500),
            PRESET_SEC6_COARSE => (501, 500),
            _ => return None,
        };
        Some(Self {
            lanes: 3,
            domain: [0.0, 25.0],
            horizon: 25.0,
            nodes,
            steps,
            flux: FluxParams {
                a: 3.0,
                b: 1.0,
                rho_max: 1.0,
            },
            cost: CostParams {
                kappa: 1.0,
                epsilon: 1e-5,
            },
            controls: ControlSet::uniform(10),
            target: TargetSet::at_position(25.0, 3),
            initial_density: InitialDensity::Preset(DENSITY_STAGGERED.to_string()),
            drift: DriftMode::OptimalControl,
            solver: SolverOptions {
                schedule: DampingSchedule::Harmonic,
                ..SolverOptions::default()
            },
            snapshots: Some(vec![0.0, 10.0, 12.5, 25.0]),
            baseline: None,
            lane_flux: None,
        })
    }

    pub fn preset_names() -> &'static [&'static str] {
        &[PRESET_SEC6, PRESET_SEC6_COARSE]
    }

    /// Parse and validate a scenario document.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Schema {
                path,
                reason: e.into_inner().to_string(),
            }
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Requested snapshot times, defaulting to `0, T/2, T`.
    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshots
            .clone()
            .unwrap_or_else(|| vec![0.0, 0.5 * self.horizon, self.horizon])
    }

    /// Every invariant violation, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.lanes;
        if n == 0 || n > u8::MAX as usize {
            out.push(format!("lanes must lie in 1..=255 (got {n})"));
        }
        let [lo, hi] = self.domain;
        let domain_ok = lo.is_finite() && hi.is_finite() && lo < hi;
        if !domain_ok {
            out.push(format!("domain must be a finite interval with lo < hi (got [{lo}, {hi}])"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            out.push(format!("horizon must be positive (got {})", self.horizon));
        }
        if self.nodes < 2 {
            out.push(format!("nodes must be at least 2 (got {})", self.nodes));
        }
        if self.steps == 0 {
            out.push("steps must be at least 1".to_string());
        }
        out.extend(self.flux.violations());
        out.extend(self.cost.violations());
        out.extend(self.controls.violations().into_iter().map(|s| format!("controls: {s}")));
        if self.target.points.is_empty() {
            out.push("target must contain at least one point".to_string());
        }
        for (k, &(x, lane)) in self.target.points.iter().enumerate() {
            if domain_ok && !(lo..=hi).contains(&x) {
                out.push(format!("target[{k}] position {x} lies outside [{lo}, {hi}]"));
            }
            if lane == 0 || lane > n {
                out.push(format!("target[{k}] lane {lane} is not in 1..={n}"));
            }
        }
        match &self.initial_density {
            InitialDensity::Preset(name) => {
                if name != DENSITY_STAGGERED && name != DENSITY_ZERO {
                    out.push(format!(
                        "initial_density preset `{name}` is unknown (expected `{DENSITY_STAGGERED}` or `{DENSITY_ZERO}`)"
                    ));
                }
            }
            InitialDensity::Samples(lanes) => {
                if lanes.len() != n {
                    out.push(format!(
                        "initial_density has {} lanes of samples for {n} lanes",
                        lanes.len()
                    ));
                }
                for (l, s) in lanes.iter().enumerate() {
                    if s.is_empty() {
                        out.push(format!("initial_density[{l}] has no samples"));
                    }
                    if s.windows(2).any(|w| w[0][0].is_nan() || w[0][0] >= w[1][0]) {
                        out.push(format!(
                            "initial_density[{l}] sample positions must be strictly increasing"
                        ));
                    }
                    if s.iter().any(|p| !(p[0].is_finite() && p[1].is_finite() && p[1] >= 0.0)) {
                        out.push(format!(
                            "initial_density[{l}] samples must be finite with non-negative density"
                        ));
                    }
                }
            }
        }
        out.extend(self.solver.violations());
        if let Some(times) = &self.snapshots {
            for &t in times {
                if !(t >= 0.0 && t <= self.horizon) {
                    out.push(format!(
                        "snapshot time {t} lies outside [0, {}]",
                        self.horizon
                    ));
                }
            }
        }
        if let Some(b) = &self.baseline {
            out.extend(b.violations(n));
        }
        if self.lane_flux.is_some() {
            out.push("lane_flux (per-lane fundamental diagrams) is not supported".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(v))
        }
    }

    /// Initial density of lane `lane` (0-based) at `x`.
    fn density_at(&self, lane: usize, x: f64) -> f64 {
        match &self.initial_density {
            InitialDensity::Preset(name) if name == DENSITY_STAGGERED => {
                let c = 2.0 * (lane + 1) as f64;
                (-(x - c) * (x - c)).exp() / 2.0
            }
            InitialDensity::Preset(_) => 0.0,
            InitialDensity::Samples(lanes) => sample_interpolate(&lanes[lane], x),
        }
    }

    pub fn to_problem(&self) -> Result<Problem> {
        self.validate()?;
        let grid = SpatialGrid::uniform(self.domain[0], self.domain[1], self.nodes)?;
        let time = TimeGrid::new(self.horizon, self.steps)?;
        let rows = (0..self.lanes)
            .map(|l| grid.project(|x| self.density_at(l, x)))
            .collect();
        Ok(Problem {
            grid,
            time,
            flux: self.flux,
            cost: self.cost,
            controls: self.controls.clone(),
            target: self.target.clone(),
            rho0: LaneArray::from_lanes(rows)?,
            drift: self.drift,
            options: self.solver,
            baseline: self
                .baseline
                .clone()
                .unwrap_or_else(|| BaselineParams::uniform(self.lanes, 1.0)),
        })
    }
}

fn sample_interpolate(samples: &[[f64; 2]], x: f64) -> f64 {
    let first = samples[0];
    let last = samples[samples.len() - 1];
    if x <= first[0] {
        return first[1];
    }
    if x >= last[0] {
        return last[1];
    }
    let k = samples.partition_point(|p| p[0] <= x);
    let (a, b) = (samples[k - 1], samples[k]);
    let t = (x - a[0]) / (b[0] - a[0]);
    (1.0 - t) * a[1] + t * b[1]
}
