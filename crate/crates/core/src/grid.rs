//! Uniform space/time discretization, cell-average projection and P1
//! interpolation.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Relative distance (in cells) under which a query point snaps onto a node.
const NODE_SNAP: f64 = 1e-10;

/// Number of Simpson subintervals per cell in [`SpatialGrid::project`].
const SIMPSON_PANELS: usize = 8;

/// Uniform grid of `M` nodes on `[x_lo, x_hi]`.
///
/// Node `x_i` carries the dual cell `E_i = [x_i - dx/2, x_i + dx/2]`
/// intersected with the domain, so the two end cells have width `dx/2` and
/// the widths sum to `x_hi - x_lo`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    x_lo: f64,
    x_hi: f64,
    nodes: usize,
    dx: f64,
}

/// Hat-function weights of a query point: `left_weight` on node `left`,
/// `right_weight` on node `left + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisWeights {
    pub left: usize,
    pub left_weight: f64,
    pub right_weight: f64,
}

impl SpatialGrid {
    pub fn uniform(x_lo: f64, x_hi: f64, nodes: usize) -> Result<Self> {
        if !(x_lo.is_finite() && x_hi.is_finite()) || x_lo >= x_hi {
            return Err(Error::InvalidGrid(format!(
                "empty or non-finite interval [{x_lo}, {x_hi}]"
            )));
        }
        if nodes < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 nodes, got {nodes}"
            )));
        }
        Ok(Self {
            x_lo,
            x_hi,
            nodes,
            dx: (x_hi - x_lo) / (nodes - 1) as f64,
        })
    }

    pub fn x_lo(&self) -> f64 {
        self.x_lo
    }

    pub fn x_hi(&self) -> f64 {
        self.x_hi
    }

    pub fn width(&self) -> f64 {
        self.x_hi - self.x_lo
    }

    pub fn len(&self) -> usize {
        self.nodes
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.nodes {
            self.x_hi
        } else {
            self.x_lo + i as f64 * self.dx
        }
    }

    /// Index of the node nearest to `x` (clamped into the grid).
    pub fn nearest(&self, x: f64) -> usize {
        (((x - self.x_lo) / self.dx).round().max(0.0) as usize).min(self.nodes - 1)
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nodes).map(|i| self.node(i))
    }

    #[inline]
    pub fn cell_width(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.nodes {
            0.5 * self.dx
        } else {
            self.dx
        }
    }

    /// Bounds of the cell carried by node `i`.
    pub fn cell(&self, i: usize) -> (f64, f64) {
        let x = self.node(i);
        let lo = if i == 0 { self.x_lo } else { x - 0.5 * self.dx };
        let hi = if i + 1 == self.nodes { self.x_hi } else { x + 0.5 * self.dx };
        (lo, hi)
    }

    /// P1 basis weights at `x`. Points outside the domain are clamped to the
    /// nearest endpoint first.
    #[inline]
    pub fn basis_weights(&self, x: f64) -> BasisWeights {
        let last = self.nodes - 1;
        let mut s = ((x - self.x_lo) / self.dx).clamp(0.0, last as f64);
        let r = s.round();
        if (s - r).abs() < NODE_SNAP {
            s = r;
        }
        let left = (s.floor() as usize).min(last - 1);
        let right_weight = s - left as f64;
        BasisWeights {
            left,
            left_weight: 1.0 - right_weight,
            right_weight,
        }
    }

    /// Piecewise-linear interpolation of nodal `values` at `x`.
    #[inline]
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        debug_assert_eq!(values.len(), self.nodes);
        let w = self.basis_weights(x);
        if w.right_weight == 0.0 {
            values[w.left]
        } else if w.left_weight == 0.0 {
            values[w.left + 1]
        } else {
            w.left_weight * values[w.left] + w.right_weight * values[w.left + 1]
        }
    }

    /// Cell averages of `density` by composite Simpson quadrature.
    pub fn project<F: Fn(f64) -> f64>(&self, density: F) -> Vec<f64> {
        (0..self.nodes)
            .map(|i| {
                let (lo, hi) = self.cell(i);
                let h = (hi - lo) / SIMPSON_PANELS as f64;
                let mut acc = density(lo) + density(hi);
                for p in 1..SIMPSON_PANELS {
                    let coef = if p % 2 == 1 { 4.0 } else { 2.0 };
                    acc += coef * density(lo + p as f64 * h);
                }
                acc / (3.0 * SIMPSON_PANELS as f64)
            })
            .collect()
    }
}

/// Uniform partition of `[0, T]` into `N` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidGrid("need at least one time step".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.steps as f64
    }

    /// Index of the time level nearest to `t`, clamped to `0..=N`.
    pub fn nearest_level(&self, t: f64) -> usize {
        ((t / self.dt()).round().max(0.0) as usize).min(self.steps)
    }
}

/// Lane-major table of per-node values for `n` lanes on an `M`-node grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneArray<T> {
    lanes: usize,
    nodes: usize,
    data: Vec<T>,
}

/// Density cell averages for all lanes at one time level.
pub type LaneField = LaneArray<f64>;

impl<T: Clone> LaneArray<T> {
    pub fn filled(lanes: usize, nodes: usize, value: T) -> Self {
        Self {
            lanes,
            nodes,
            data: vec![value; lanes * nodes],
        }
    }
}

impl<T> LaneArray<T> {
    pub fn from_lanes(rows: Vec<Vec<T>>) -> Result<Self> {
        let lanes = rows.len();
        let nodes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != nodes) {
            return Err(Error::ShapeMismatch("lanes have different lengths".into()));
        }
        Ok(Self {
            lanes,
            nodes,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_fn(lanes: usize, nodes: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(lanes * nodes);
        for l in 0..lanes {
            for i in 0..nodes {
                data.push(f(l, i));
            }
        }
        Self { lanes, nodes, data }
    }

    pub fn lanes(&self) -> usize {
        self.lanes
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn lane(&self, l: usize) -> &[T] {
        &self.data[l * self.nodes..(l + 1) * self.nodes]
    }

    pub fn lane_mut(&mut self, l: usize) -> &mut [T] {
        &mut self.data[l * self.nodes..(l + 1) * self.nodes]
    }

    pub fn lanes_iter(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.nodes.max(1))
    }

    pub fn lanes_iter_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.data.chunks_mut(self.nodes.max(1))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn same_shape<U>(&self, other: &LaneArray<U>) -> bool {
        self.lanes == other.lanes && self.nodes == other.nodes
    }

    pub(crate) fn check_shape<U>(&self, other: &LaneArray<U>, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.lanes, self.nodes, other.lanes, other.nodes
            )))
        }
    }
}

impl<T> Index<(usize, usize)> for LaneArray<T> {
    type Output = T;

    #[inline]
    fn index(&self, (l, i): (usize, usize)) -> &T {
        &self.data[l * self.nodes + i]
    }
}

impl<T> IndexMut<(usize, usize)> for LaneArray<T> {
    #[inline]
    fn index_mut(&mut self, (l, i): (usize, usize)) -> &mut T {
        &mut self.data[l * self.nodes + i]
    }
}
