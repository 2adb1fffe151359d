//! Mean-field-game solver for multi-lane traffic with hybrid lane switching.
//!
//! The forward half transports per-lane densities with a mass-conservative
//! semi-Lagrangian scheme and exchanges mass between lanes according to the
//! switching policy. The backward half solves the switching quasi-variational
//! inequality with a semi-Lagrangian scheme over a finite control set.
//! [`mfg::solve`] couples the two by policy iteration, and [`baseline`]
//! provides the uncontrolled multi-lane LWR model for comparison.
//!
//! Lanes are 0-based throughout the API; scenario files and CSV output use
//! 1-based lane numbers.

pub mod baseline;
pub mod error;
pub mod grid;
pub mod hjb;
pub mod mfg;
pub mod model;
pub mod problem;
pub mod scenario;
pub mod transport;

pub use baseline::{lwr_velocity, uncontrolled_solve, BaselineParams};
pub use error::{Error, Result};
pub use grid::{BasisWeights, LaneArray, LaneField, SpatialGrid, TimeGrid};
pub use hjb::{ControlSet, PolicySlice, ValueSlice};
pub use mfg::{solve, DampingSchedule, DriftMode, MfgSolution, Residuals, SolverOptions, Trajectory};
pub use model::{CostParams, FluxParams, TargetSet};
pub use problem::Problem;
pub use scenario::{InitialDensity, Scenario};
pub use transport::{MassReport, SourceSlice, VelocityField};
