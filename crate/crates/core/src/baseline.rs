//! Uncontrolled multi-lane LWR reference model: each lane is transported at
//! the car speed `f(rho)/rho` and exchanges mass with its neighbours through
//! relaxation-time source terms.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{LaneArray, LaneField};
use crate::mfg::Trajectory;
use crate::model::FluxParams;
use crate::problem::Problem;
use crate::transport::{forward_step, shvetsov_source};

/// Densities below this use the free-flow speed.
pub const RHO_TINY: f64 = 1e-12;

/// Lane-change relaxation times, one per lane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineParams {
    pub t_left: Vec<f64>,
    pub t_right: Vec<f64>,
}

impl BaselineParams {
    pub fn uniform(lanes: usize, t: f64) -> Self {
        Self {
            t_left: vec![t; lanes],
            t_right: vec![t; lanes],
        }
    }

    pub(crate) fn violations(&self, lanes: usize) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [("t_left", &self.t_left), ("t_right", &self.t_right)] {
            if v.len() != lanes {
                out.push(format!(
                    "baseline.{name} has {} entries for {lanes} lanes",
                    v.len()
                ));
            }
            if v.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                out.push(format!("baseline.{name} entries must be positive and finite"));
            }
        }
        out
    }
}

/// Car speed `v(rho)` with `f = v rho`; the free-flow slope near zero, never
/// negative.
pub fn lwr_velocity(rho: f64, flux: &FluxParams) -> f64 {
    if rho <= RHO_TINY {
        flux.a
    } else {
        (flux.flux(rho) / rho).max(0.0)
    }
}

/// LWR speed with the Godunov cap: node j sends at most
/// `min(demand(rho_j), supply(rho_{j+1}))`. Without it the continuity form
/// transports congested states downwind (the car speed is positive while
/// information travels backwards) and small perturbations grow.
fn limited_lwr_velocity(rho: &LaneField, flux: &FluxParams) -> LaneArray<f64> {
    let crit = flux.critical_density();
    let m = rho.nodes();
    LaneArray::from_fn(rho.lanes(), m, |l, j| {
        let r = rho[(l, j)];
        let free = lwr_velocity(r, flux);
        if j + 1 == m || r <= RHO_TINY {
            return free;
        }
        let demand = flux.flux(r.min(crit)).max(0.0);
        let supply = flux.flux(rho[(l, j + 1)].max(crit)).max(0.0);
        demand.min(supply) / r
    })
}

/// March the uncontrolled system from the problem's initial densities.
pub fn uncontrolled_solve(problem: &Problem, params: &BaselineParams) -> Result<Trajectory> {
    let steps = problem.time.steps();
    let dt = problem.time.dt();
    let mut rho: Vec<LaneField> = Vec::with_capacity(steps + 1);
    let mut cumulative_outflow = vec![0.0];
    let mut cumulative_clamped = vec![0.0];
    rho.push(problem.rho0.clone());
    for k in 0..steps {
        let cur = &rho[k];
        let vel = limited_lwr_velocity(cur, &problem.flux);
        let src = shvetsov_source(cur, &params.t_left, &params.t_right, &problem.flux);
        let step = forward_step(cur, &vel, &src, &problem.grid, dt)?;
        cumulative_outflow.push(cumulative_outflow[k] + step.outflow);
        cumulative_clamped.push(cumulative_clamped[k] + step.clamped);
        rho.push(step.rho);
    }
    Ok(Trajectory {
        rho,
        cumulative_outflow,
        cumulative_clamped,
    })
}
