//! Forward semi-Lagrangian scheme for the per-lane continuity equations
//! with lane-exchange sources.
//!
//! Each step adds `dt` times the exchange source at the departure nodes, then
//! pushes the mass of every cell along its discrete characteristic and
//! spreads it over the two nodes bracketing the foot with hat weights. Since
//! the push-forward is linear this equals `G(rho) + dt * G(src)`; sinks never
//! exceed `f(rho) <= a rho`, so `dt * a <= 1` keeps densities non-negative.

use log::warn;

use crate::error::{Error, Result};
use crate::grid::{LaneArray, LaneField, SpatialGrid};
use crate::model::FluxParams;

/// Per-lane, per-node transport speed at one time level.
pub type VelocityField = LaneArray<f64>;

/// Per-lane, per-node source rate at one time level.
pub type SourceSlice = LaneArray<f64>;

/// Clamped mass per step, relative to the total, above which a warning is
/// emitted.
pub const CLAMP_WARN_FRACTION: f64 = 1e-6;

/// Forward feet `x_j + dt * v_j` for every lane and node.
pub fn characteristic_feet(vel: &VelocityField, grid: &SpatialGrid, dt: f64) -> LaneArray<f64> {
    LaneArray::from_fn(vel.lanes(), vel.nodes(), |l, j| grid.node(j) + dt * vel[(l, j)])
}

/// Result of scattering one lane's mass onto the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Deposit {
    pub values: Vec<f64>,
    /// Mass carried out of the domain by feet more than half a cell beyond
    /// either endpoint.
    pub outflow: f64,
}

/// Mass-conservative push-forward of the nodal densities `w` along `feet`.
pub fn g_operator(w: &[f64], feet: &[f64], grid: &SpatialGrid) -> Deposit {
    let m = grid.len();
    debug_assert_eq!(w.len(), m);
    debug_assert_eq!(feet.len(), m);
    let half = 0.5 * grid.dx();
    let mut values = vec![0.0; m];
    let mut outflow = 0.0;
    for j in 0..m {
        let mass = w[j] * grid.cell_width(j);
        if mass == 0.0 {
            continue;
        }
        let y = feet[j];
        if y > grid.x_hi() + half || y < grid.x_lo() - half {
            outflow += mass;
            continue;
        }
        let bw = grid.basis_weights(y);
        values[bw.left] += bw.left_weight * mass / grid.cell_width(bw.left);
        if bw.right_weight != 0.0 {
            values[bw.left + 1] += bw.right_weight * mass / grid.cell_width(bw.left + 1);
        }
    }
    Deposit { values, outflow }
}

/// Exchange source of the controlled system: lane `l` loses `f(rho_l)` where
/// its switch target differs from `l`, and gains `f(rho_b)` from every lane
/// `b` whose target is `l`. Lanes are 0-based. Rates are floored at zero so
/// an overshooting density (`rho > rho_max`) exchanges nothing.
pub fn mfg_source<T: Copy + Into<usize>>(
    rho: &LaneField,
    targets: &LaneArray<T>,
    flux: &FluxParams,
) -> Result<SourceSlice> {
    rho.check_shape(targets, "density vs switch targets")?;
    let n = rho.lanes();
    let mut src = LaneArray::filled(n, rho.nodes(), 0.0);
    for l in 0..n {
        for i in 0..rho.nodes() {
            let q: usize = targets[(l, i)].into();
            if q >= n {
                return Err(Error::InvalidSwitchTarget {
                    lane: l,
                    node: i,
                    target: q,
                    lanes: n,
                });
            }
            if q != l {
                let rate = flux.flux(rho[(l, i)]).max(0.0);
                src[(l, i)] -= rate;
                src[(q, i)] += rate;
            }
        }
    }
    Ok(src)
}

/// Uncontrolled lane-exchange source for adjacent lanes with relaxation
/// times `t_left`, `t_right` (one entry per lane). Fluxes are floored at
/// zero as in [`mfg_source`].
pub fn shvetsov_source(
    rho: &LaneField,
    t_left: &[f64],
    t_right: &[f64],
    flux: &FluxParams,
) -> SourceSlice {
    let n = rho.lanes();
    debug_assert_eq!(t_left.len(), n);
    debug_assert_eq!(t_right.len(), n);
    LaneArray::from_fn(n, rho.nodes(), |l, i| {
        let f = |k: usize| flux.flux(rho[(k, i)]).max(0.0);
        let mut s = 0.0;
        if l > 0 {
            s += f(l - 1) / t_left[l - 1] - f(l) / t_right[l];
        }
        if l + 1 < n {
            s += f(l + 1) / t_right[l + 1] - f(l) / t_left[l];
        }
        s
    })
}

/// New densities and mass bookkeeping of one forward step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub rho: LaneField,
    /// Mass that left through the domain boundary during the step.
    pub outflow: f64,
    /// Mass added by clamping negative densities to zero.
    pub clamped: f64,
}

/// One step `rho_{k+1} = G(rho_k + dt * src)`, per lane. Negative values of
/// `rho_k + dt * src` are clamped to zero before transport.
pub fn forward_step(
    rho: &LaneField,
    vel: &VelocityField,
    src: &SourceSlice,
    grid: &SpatialGrid,
    dt: f64,
) -> Result<StepOutcome> {
    rho.check_shape(vel, "density vs velocity")?;
    rho.check_shape(src, "density vs source")?;
    if rho.nodes() != grid.len() {
        return Err(Error::ShapeMismatch(format!(
            "density has {} nodes, grid has {}",
            rho.nodes(),
            grid.len()
        )));
    }
    let feet = characteristic_feet(vel, grid, dt);
    let mut out = LaneArray::filled(rho.lanes(), rho.nodes(), 0.0);
    let mut outflow = 0.0;
    let mut clamped = 0.0;
    let mut pre = vec![0.0; rho.nodes()];
    for l in 0..rho.lanes() {
        for (i, p) in pre.iter_mut().enumerate() {
            let v = rho[(l, i)] + dt * src[(l, i)];
            if v < 0.0 {
                clamped -= v * grid.cell_width(i);
                *p = 0.0;
            } else {
                *p = v;
            }
        }
        let dep = g_operator(&pre, feet.lane(l), grid);
        outflow += dep.outflow;
        out.lane_mut(l).copy_from_slice(&dep.values);
    }
    if clamped > 0.0 {
        let total = total_mass(rho, grid).total;
        if clamped > CLAMP_WARN_FRACTION * total {
            warn!("negative densities clamped: {clamped:.3e} mass added (total {total:.3e})");
        }
    }
    Ok(StepOutcome {
        rho: out,
        outflow,
        clamped,
    })
}

/// Mass per lane and in total.
#[derive(Debug, Clone, PartialEq)]
pub struct MassReport {
    pub per_lane: Vec<f64>,
    pub total: f64,
}

pub fn total_mass(rho: &LaneField, grid: &SpatialGrid) -> MassReport {
    let per_lane: Vec<f64> = rho
        .lanes_iter()
        .map(|lane| {
            lane.iter()
                .enumerate()
                .map(|(i, v)| v * grid.cell_width(i))
                .sum()
        })
        .collect();
    let total = per_lane.iter().sum();
    MassReport { per_lane, total }
}
