//! Brute-force dynamic programming for small frozen-density problems.
//!
//! Every (lane chain, control) choice is enumerated at every step and the
//! resulting tree is expanded recursively through the P1 interpolation
//! stencil, with no memoization and no Jacobi sweeps. Weights, running cost
//! and flux are recomputed from their closed forms here.

pub struct Setup {
    pub x_lo: f64,
    pub dx: f64,
    pub nodes: usize,
    pub dt: f64,
    pub steps: usize,
    pub controls: Vec<f64>,
    pub kappa: f64,
    pub epsilon: f64,
    pub a: f64,
    pub b: f64,
    pub rho_max: f64,
    /// `rho[lane][node]`, frozen in time.
    pub rho: Vec<Vec<f64>>,
    /// Terminal value per node, shared by all lanes.
    pub terminal: Vec<f64>,
}

impl Setup {
    fn flux(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        (self.a * r).min(self.b * (self.rho_max - r))
    }

    fn cost(&self, r: f64) -> f64 {
        1.0 / (self.rho_max - r).max(self.epsilon)
    }

    /// (node, weight) pairs of the P1 hat functions at `x`, clamped to the domain.
    fn stencil(&self, x: f64) -> Vec<(usize, f64)> {
        let hi = self.x_lo + self.dx * (self.nodes - 1) as f64;
        let x = x.clamp(self.x_lo, hi);
        let s = (x - self.x_lo) / self.dx;
        let i = (s.floor() as usize).min(self.nodes - 2);
        let t = s - i as f64;
        vec![(i, 1.0 - t), (i + 1, t)]
    }

    /// Every sequence of distinct lanes starting at `from` (including the
    /// empty chain), with its accumulated switching cost and final lane.
    fn chains(&self, from: usize) -> Vec<(f64, usize)> {
        let n = self.rho.len();
        let mut out = Vec::new();
        let mut stack = vec![(vec![from], 0.0)];
        while let Some((path, c)) = stack.pop() {
            let last = *path.last().unwrap();
            out.push((c, last));
            for b in 0..n {
                if !path.contains(&b) {
                    let mut p = path.clone();
                    p.push(b);
                    stack.push((p, c + self.kappa * (last as f64 - b as f64).abs()));
                }
            }
        }
        out
    }

    /// Optimal cost from (`level`, node `j`, lane `l`) to the horizon.
    pub fn value(&self, level: usize, j: usize, l: usize) -> f64 {
        if level == self.steps {
            return self.terminal[j];
        }
        let x = self.x_lo + self.dx * j as f64;
        let mut best = f64::INFINITY;
        for (jump, lane) in self.chains(l) {
            let r = self.rho[lane][j];
            let speed = self.flux(r).max(0.0);
            for &u in &self.controls {
                let mut total = jump + self.dt * self.cost(r);
                for (i, w) in self.stencil(x + self.dt * u * speed) {
                    if w != 0.0 {
                        total += w * self.value(level + 1, i, lane);
                    }
                }
                best = best.min(total);
            }
        }
        best
    }
}
