//! Shared fixtures for the solver benchmarks.

use lanemfg::{Problem, Scenario};

/// The coarse three-lane experiment with its grid scaled by `factor`
/// (`factor = 1` is the coarse preset itself).
pub fn coarse_problem(factor: f64) -> Problem {
    let mut s = Scenario::preset(lanemfg::scenario::PRESET_SEC6_COARSE).expect("preset");
    s.nodes = ((s.nodes - 1) as f64 * factor).round() as usize + 1;
    s.steps = (s.steps as f64 * factor).round().max(1.0) as usize;
    s.to_problem().expect("valid preset")
}
