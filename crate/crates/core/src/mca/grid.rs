//! Regular rectangular grid over the state space.

use crate::error::{Error, Result};
use crate::sde::MAX_DIM;

/// One grid axis: `n` nodes at `lo + j * h`, `h = (hi - lo) / (n - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<AxisSpec>,
}

impl Grid {
    pub fn new(axes: Vec<AxisSpec>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_DIM {
            return Err(Error::Argument(format!(
                "grid must have between 1 and {MAX_DIM} dimensions"
            )));
        }
        for (d, a) in axes.iter().enumerate() {
            if a.n < 3 {
                return Err(Error::Argument(format!(
                    "axis {d} needs at least 3 nodes, got {}",
                    a.n
                )));
            }
            if !(a.hi > a.lo) {
                return Err(Error::Argument(format!(
                    "axis {d} bounds [{}, {}] are not increasing",
                    a.lo, a.hi
                )));
            }
        }
        Ok(Self { axes })
    }

    pub fn axes(&self) -> &[AxisSpec] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn spacing(&self, d: usize) -> f64 {
        let a = &self.axes[d];
        (a.hi - a.lo) / (a.n - 1) as f64
    }

    pub fn coord(&self, d: usize, j: usize) -> f64 {
        self.axes[d].lo + j as f64 * self.spacing(d)
    }

    /// Row-major flat index, first axis slowest.
    pub fn flat_from_multi(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (d, &j) in idx.iter().enumerate() {
            debug_assert!(j < self.axes[d].n);
            flat = flat * self.axes[d].n + j;
        }
        flat
    }

    pub fn multi_from_flat(&self, mut flat: usize, out: &mut [usize]) {
        for d in (0..self.dim()).rev() {
            out[d] = flat % self.axes[d].n;
            flat /= self.axes[d].n;
        }
        debug_assert_eq!(flat, 0);
    }

    pub fn node_coords(&self, flat: usize, out: &mut [f64]) {
        let mut idx = [0usize; MAX_DIM];
        self.multi_from_flat(flat, &mut idx[..self.dim()]);
        for d in 0..self.dim() {
            out[d] = self.coord(d, idx[d]);
        }
    }

    /// Nearest node to `x` after clamping to the grid bounds; exact
    /// midpoints resolve toward the lower index.
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mut idx = [0usize; MAX_DIM];
        for d in 0..self.dim() {
            let a = &self.axes[d];
            let v = (x[d].clamp(a.lo, a.hi) - a.lo) / self.spacing(d);
            let j = (v - 0.5).ceil();
            idx[d] = (j.max(0.0) as usize).min(a.n - 1);
        }
        self.flat_from_multi(&idx[..self.dim()])
    }
}
