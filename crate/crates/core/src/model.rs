//! Model functions of the controlled multi-lane traffic system: the
//! piecewise-linear fundamental diagram, lane-switching cost, congestion
//! running cost and the distance-to-target terminal cost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients of the triangular fundamental diagram
/// `f(rho) = min(a rho, b (rho_max - rho))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxParams {
    /// Free-flow slope.
    pub a: f64,
    /// Congestion slope.
    pub b: f64,
    /// Jam density.
    pub rho_max: f64,
}

impl FluxParams {
    pub fn new(a: f64, b: f64, rho_max: f64) -> Result<Self> {
        let p = Self { a, b, rho_max };
        let problems = p.violations();
        if problems.is_empty() {
            Ok(p)
        } else {
            Err(Error::InvalidParameter(problems.join("; ")))
        }
    }

    pub(crate) fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [("a", self.a), ("b", self.b), ("rho_max", self.rho_max)] {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("flux.{name} must be positive and finite (got {v})"));
            }
        }
        out
    }

    /// Flux at density `rho`. Negative densities are treated as zero; the
    /// result is negative only for `rho > rho_max`.
    #[inline]
    pub fn flux(&self, rho: f64) -> f64 {
        let rho = rho.max(0.0);
        (self.a * rho).min(self.b * (self.rho_max - rho))
    }

    /// Density at which the flux peaks.
    pub fn critical_density(&self) -> f64 {
        self.b / (self.a + self.b) * self.rho_max
    }

    pub fn max_flux(&self) -> f64 {
        self.a * self.b / (self.a + self.b) * self.rho_max
    }

    /// Mass flux ρ·f⁺(ρ) carried when vehicles move at speed f(ρ).
    pub fn mass_flux(&self, rho: f64) -> f64 {
        let r = rho.max(0.0);
        r * self.flux(r).max(0.0)
    }

    /// Density maximizing [`mass_flux`](Self::mass_flux). The quadratic
    /// branch a·ρ² increases up to ρ̄, the congested branch b·ρ(ρ_max − ρ)
    /// peaks at ρ_max/2.
    pub fn capacity_density(&self) -> f64 {
        self.critical_density().max(0.5 * self.rho_max)
    }

    /// Largest mass flux a cell at density `rho` can send downstream.
    pub fn demand(&self, rho: f64) -> f64 {
        self.mass_flux(rho.min(self.capacity_density()))
    }

    /// Largest mass flux a cell at density `rho` can accept from upstream.
    pub fn supply(&self, rho: f64) -> f64 {
        self.mass_flux(rho.max(self.capacity_density()))
    }
}

/// Switching and running cost parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    /// Cost per lane of lateral displacement.
    pub kappa: f64,
    /// Floor of the free-space term in the running cost.
    pub epsilon: f64,
}

impl CostParams {
    pub fn new(kappa: f64, epsilon: f64) -> Result<Self> {
        let c = Self { kappa, epsilon };
        let problems = c.violations();
        if problems.is_empty() {
            Ok(c)
        } else {
            Err(Error::InvalidParameter(problems.join("; ")))
        }
    }

    pub(crate) fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.kappa.is_nan() || self.kappa <= 0.0 {
            out.push(format!(
                "cost.kappa must be strictly positive (got {})",
                self.kappa
            ));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            out.push(format!(
                "cost.epsilon must be positive and finite (got {})",
                self.epsilon
            ));
        }
        out
    }

    /// `kappa * |from - to|`; lanes may be indexed from 0 or 1, only the
    /// difference matters.
    #[inline]
    pub fn switching_cost(&self, from: usize, to: usize) -> f64 {
        if from == to {
            0.0
        } else {
            self.kappa * from.abs_diff(to) as f64
        }
    }

    /// `1 / max(rho_max - rho, epsilon)`, with negative densities clamped to 0.
    #[inline]
    pub fn running_cost(&self, rho: f64, flux: &FluxParams) -> f64 {
        1.0 / (flux.rho_max - rho.max(0.0)).max(self.epsilon)
    }
}

/// Target set: a list of `(position, lane)` points. Lanes are 1-based as in
/// scenario files. The terminal cost only uses positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TargetSet {
    pub points: Vec<(f64, usize)>,
}

impl TargetSet {
    pub fn new(points: Vec<(f64, usize)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("target set is empty".into()));
        }
        Ok(Self { points })
    }

    /// Target points at `x` on every lane `1..=lanes`.
    pub fn at_position(x: f64, lanes: usize) -> Self {
        Self {
            points: (1..=lanes).map(|l| (x, l)).collect(),
        }
    }

    /// Distance along the road from `x` to the nearest target point.
    pub fn terminal_value(&self, x: f64) -> f64 {
        self.points
            .iter()
            .map(|&(y, _)| (x - y).abs())
            .fold(f64::INFINITY, f64::min)
    }
}
