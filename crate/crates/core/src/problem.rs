//! Discretized problem data assembled from a scenario.

use crate::baseline::BaselineParams;
use crate::grid::{LaneField, SpatialGrid, TimeGrid};
use crate::hjb::{terminal_slice, ControlSet, HjbParams, ValueSlice};
use crate::mfg::{DriftMode, SolverOptions};
use crate::model::{CostParams, FluxParams, TargetSet};

/// Everything the solvers need, already discretized.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: SpatialGrid,
    pub time: TimeGrid,
    pub flux: FluxParams,
    pub cost: CostParams,
    pub controls: ControlSet,
    pub target: TargetSet,
    /// Projected initial densities.
    pub rho0: LaneField,
    pub drift: DriftMode,
    pub options: SolverOptions,
    pub baseline: BaselineParams,
}

impl Problem {
    pub fn lanes(&self) -> usize {
        self.rho0.lanes()
    }

    pub fn hjb_params(&self) -> HjbParams<'_> {
        HjbParams {
            grid: &self.grid,
            time: &self.time,
            controls: &self.controls,
            cost: &self.cost,
            flux: &self.flux,
        }
    }

    pub fn terminal(&self) -> ValueSlice {
        terminal_slice(&self.grid, self.lanes(), &self.target)
    }

    /// Value tolerance, defaulting to `1e-6` times the domain width.
    pub fn tol_value(&self) -> f64 {
        self.options
            .tol_value
            .unwrap_or(1e-6 * self.grid.width())
    }
}
