//! Backward semi-Lagrangian solver for the hybrid-control quasi-variational
//! inequality.
//!
//! At each time level the continuous-control branch is a minimization over a
//! finite control set of `dt * l + I[V_next](x + dt * u * f(rho))`, and the
//! switching branch is the jump operator `min_{b != a} V(b) + kappa |a - b|`
//! evaluated on the same level. The implicit switching branch is resolved by
//! a short Jacobi fixed point that terminates because `kappa > 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{LaneArray, LaneField, SpatialGrid, TimeGrid};
use crate::model::{CostParams, FluxParams, TargetSet};

/// Value function at one time level, per lane and node.
pub type ValueSlice = LaneArray<f64>;

/// Finite set of control levels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlSet {
    levels: Vec<f64>,
}

impl ControlSet {
    /// Levels must include 0 and 1, be strictly increasing, and number at
    /// most 256.
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        let set = Self { levels };
        let problems = set.violations();
        if problems.is_empty() {
            Ok(set)
        } else {
            Err(Error::InvalidParameter(problems.join("; ")))
        }
    }

    /// `{0, 1/k, ..., 1}`.
    pub fn uniform(intervals: usize) -> Self {
        let k = intervals.max(1);
        Self {
            levels: (0..=k).map(|i| i as f64 / k as f64).collect(),
        }
    }

    pub(crate) fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.levels.first() != Some(&0.0) {
            out.push("controls must start at 0".to_string());
        }
        if self.levels.last() != Some(&1.0) {
            out.push("controls must end at 1".to_string());
        }
        if self.levels.windows(2).any(|w| w[0].is_nan() || w[0] >= w[1]) {
            out.push("controls must be strictly increasing".to_string());
        }
        if self.levels.len() > u8::MAX as usize + 1 {
            out.push(format!("at most 256 controls (got {})", self.levels.len()));
        }
        out
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn value(&self, index: u8) -> f64 {
        self.levels[index as usize]
    }
}

/// Feedback policy at one time level: control index into the [`ControlSet`]
/// and switch target lane (0-based), per lane and node.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySlice {
    pub control: LaneArray<u8>,
    pub target: LaneArray<u8>,
}

impl PolicySlice {
    /// Policy that never switches and uses control index `control`.
    pub fn stay(lanes: usize, nodes: usize, control: u8) -> Self {
        Self {
            control: LaneArray::filled(lanes, nodes, control),
            target: LaneArray::from_fn(lanes, nodes, |l, _| l as u8),
        }
    }

    /// Relative switch `Q - alpha` at lane `l`, node `i`.
    pub fn relative_switch(&self, l: usize, i: usize) -> i32 {
        self.target[(l, i)] as i32 - l as i32
    }

    /// Number of (lane, node) cells where the two policies differ.
    pub fn count_differences(&self, other: &PolicySlice) -> usize {
        let c = self.control.as_slice().iter().zip(other.control.as_slice());
        let t = self.target.as_slice().iter().zip(other.target.as_slice());
        c.zip(t)
            .filter(|((a, b), (p, q))| a != b || p != q)
            .count()
    }
}

/// Discretization data shared by every backward step.
#[derive(Debug, Clone, Copy)]
pub struct HjbParams<'a> {
    pub grid: &'a SpatialGrid,
    pub time: &'a TimeGrid,
    pub controls: &'a ControlSet,
    pub cost: &'a CostParams,
    pub flux: &'a FluxParams,
}

/// Terminal values: distance to the target set, identical on every lane.
pub fn terminal_slice(grid: &SpatialGrid, lanes: usize, target: &TargetSet) -> ValueSlice {
    let row: Vec<f64> = grid.nodes().map(|x| target.terminal_value(x)).collect();
    LaneArray::from_fn(lanes, grid.len(), |_, i| row[i])
}

/// Jump operator values and minimizing target lanes.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpResult {
    pub values: ValueSlice,
    pub targets: LaneArray<u8>,
}

/// `min_{b != a} V(x, b) + kappa |a - b|`. Ties go to the nearest lane, then
/// the lower index. With a single lane the result is `+inf` and the target
/// is the lane itself.
pub fn jump_operator(v: &ValueSlice, cost: &CostParams) -> JumpResult {
    let n = v.lanes();
    // candidates ordered by (distance, index)
    let order: Vec<Vec<usize>> = (0..n)
        .map(|a| {
            let mut c: Vec<usize> = (0..n).filter(|&b| b != a).collect();
            c.sort_by_key(|&b| (a.abs_diff(b), b));
            c
        })
        .collect();
    let mut values = LaneArray::filled(n, v.nodes(), f64::INFINITY);
    let mut targets = LaneArray::from_fn(n, v.nodes(), |l, _| l as u8);
    for (a, cands) in order.iter().enumerate() {
        for i in 0..v.nodes() {
            let mut best = f64::INFINITY;
            let mut arg = a;
            for &b in cands {
                let c = v[(b, i)] + cost.switching_cost(a, b);
                if c < best {
                    best = c;
                    arg = b;
                }
            }
            values[(a, i)] = best;
            targets[(a, i)] = arg as u8;
        }
    }
    JumpResult { values, targets }
}

/// Continuous-control branch: per lane and node, minimize over the control
/// set `dt * l(rho) + I[v_next](x + dt * u * f(rho))`. Returns the minimum
/// and the minimizing control index; ties go to the largest control.
///
/// The flux is floored at zero so vehicles never move backwards when a
/// density overshoots `rho_max`.
pub fn hamiltonian_step(
    v_next: &ValueSlice,
    rho: &LaneField,
    p: &HjbParams<'_>,
) -> Result<(ValueSlice, LaneArray<u8>)> {
    v_next.check_shape(rho, "value vs density")?;
    let (n, m) = (v_next.lanes(), v_next.nodes());
    let dt = p.time.dt();
    let levels = p.controls.levels();
    let cells: Vec<(f64, u8)> = (0..n * m)
        .into_par_iter()
        .map(|idx| {
            let (l, j) = (idx / m, idx % m);
            let r = rho[(l, j)];
            let speed = p.flux.flux(r).max(0.0);
            let x = p.grid.node(j);
            let lane = v_next.lane(l);
            let mut best = f64::INFINITY;
            let mut arg = 0u8;
            for (k, &u) in levels.iter().enumerate() {
                let val = p.grid.interpolate(lane, x + dt * u * speed);
                if val <= best {
                    best = val;
                    arg = k as u8;
                }
            }
            (dt * p.cost.running_cost(r, p.flux) + best, arg)
        })
        .collect();
    let values = LaneArray::from_fn(n, m, |l, j| cells[l * m + j].0);
    let control = LaneArray::from_fn(n, m, |l, j| cells[l * m + j].1);
    Ok((values, control))
}

/// One backward level of the QVI: `V = min(Psi(V), Sigma(V_next))`.
///
/// Starting from the continuous-control value `W`, Jacobi sweeps
/// `V <- min(V, Psi(V))` run until nothing changes. A cell keeps its own
/// lane as target when `W` attains the minimum; otherwise chained switches
/// are collapsed to their final lane.
pub fn qvi_backward_step(
    v_next: &ValueSlice,
    rho: &LaneField,
    p: &HjbParams<'_>,
) -> Result<(ValueSlice, PolicySlice)> {
    let (mut v, control) = hamiltonian_step(v_next, rho, p)?;
    let (n, m) = (v.lanes(), v.nodes());
    let mut target = LaneArray::from_fn(n, m, |l, _| l as u8);
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        if sweeps > n {
            return Err(Error::JumpIterationLimit(n));
        }
        let jump = jump_operator(&v, p.cost);
        let mut changed = false;
        for (idx, (cur, cand)) in v
            .as_mut_slice()
            .iter_mut()
            .zip(jump.values.as_slice())
            .enumerate()
        {
            if *cand < *cur {
                *cur = *cand;
                target.as_mut_slice()[idx] = jump.targets.as_slice()[idx];
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if n > 1 {
        for i in 0..m {
            for l in 0..n {
                let mut t = target[(l, i)] as usize;
                for _ in 0..n {
                    let next = target[(t, i)] as usize;
                    if next == t {
                        break;
                    }
                    t = next;
                }
                target[(l, i)] = t as u8;
            }
        }
    }
    Ok((v, PolicySlice { control, target }))
}

/// Density input of a backward solve.
#[derive(Debug, Clone, Copy)]
pub enum DensityPath<'a> {
    /// The same slice at every level.
    Frozen(&'a LaneField),
    /// One slice per time level `0..=N`.
    Trajectory(&'a [LaneField]),
}

impl<'a> DensityPath<'a> {
    pub fn at(&self, k: usize) -> &'a LaneField {
        match *self {
            DensityPath::Frozen(r) => r,
            DensityPath::Trajectory(t) => &t[k],
        }
    }
}

/// Value slices for levels `0..=N` and policies for levels `0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardSolution {
    pub values: Vec<ValueSlice>,
    pub policies: Vec<PolicySlice>,
}

/// Change between two consecutive backward solves.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepChange {
    /// Number of (level, lane, node) cells whose control or target changed.
    pub policy_cells: usize,
    /// Sup-norm change of the value function over all levels.
    pub value_sup: f64,
}

/// Full backward march from the terminal slice, using the density at level
/// `k` for the step from `k + 1` to `k`.
pub fn solve_backward(
    rho: DensityPath<'_>,
    terminal: &ValueSlice,
    p: &HjbParams<'_>,
) -> Result<BackwardSolution> {
    let steps = p.time.steps();
    let mut values = vec![terminal.clone(); steps + 1];
    let mut policies = Vec::with_capacity(steps);
    for k in (0..steps).rev() {
        let (v, pol) = qvi_backward_step(&values[k + 1], rho.at(k), p)?;
        values[k] = v;
        policies.push(pol);
    }
    policies.reverse();
    Ok(BackwardSolution { values, policies })
}

/// Backward march that overwrites `sol` in place and reports how much it
/// changed. `sol` must already hold `N + 1` value and `N` policy slices.
pub fn resolve_backward(
    sol: &mut BackwardSolution,
    rho: DensityPath<'_>,
    p: &HjbParams<'_>,
) -> Result<SweepChange> {
    let steps = p.time.steps();
    if sol.values.len() != steps + 1 || sol.policies.len() != steps {
        return Err(Error::ShapeMismatch(format!(
            "backward solution has {} value / {} policy levels, expected {} / {}",
            sol.values.len(),
            sol.policies.len(),
            steps + 1,
            steps
        )));
    }
    let mut change = SweepChange::default();
    for k in (0..steps).rev() {
        let (v, pol) = qvi_backward_step(&sol.values[k + 1], rho.at(k), p)?;
        change.value_sup = sup_diff(&v, &sol.values[k]).max(change.value_sup);
        change.policy_cells += pol.count_differences(&sol.policies[k]);
        sol.values[k] = v;
        sol.policies[k] = pol;
    }
    Ok(change)
}

pub(crate) fn sup_diff(a: &ValueSlice, b: &ValueSlice) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
