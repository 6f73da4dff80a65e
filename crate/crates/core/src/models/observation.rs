//! Linear Gaussian observation model `y = H x + e`, `e ~ N(0, diag(R))`,
//! sampled every `period` time units.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    /// Observation matrix, row-major, `rows x state_dim`.
    pub h: Vec<f64>,
    pub rows: usize,
    /// Observation-noise variances, one per row.
    pub r_diag: Vec<f64>,
    /// Model time between observations; must be a positive integer multiple
    /// of the simulation step.
    pub period: f64,
}

impl ObservationModel {
    pub fn new(h: Vec<f64>, rows: usize, r_diag: Vec<f64>, period: f64) -> Result<Self> {
        if rows == 0 || h.len() % rows != 0 {
            return Err(Error::Argument(format!(
                "observation matrix of {} entries cannot have {} rows",
                h.len(),
                rows
            )));
        }
        if r_diag.len() != rows {
            return Err(Error::Argument(
                "observation noise entries must match rows".into(),
            ));
        }
        if r_diag.iter().any(|&r| r < 0.0) {
            return Err(Error::Argument("negative observation variance".into()));
        }
        if period <= 0.0 {
            return Err(Error::Argument("observation period must be positive".into()));
        }
        Ok(Self {
            h,
            rows,
            r_diag,
            period,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.h.len() / self.rows
    }

    /// Number of simulation steps between observations; errors unless
    /// `period` is an integer multiple of `dt`.
    pub fn steps_per_observation(&self, dt: f64) -> Result<usize> {
        let k = self.period / dt;
        let rounded = k.round();
        if rounded < 1.0 || (k - rounded).abs() > 1e-9 * k.max(1.0) {
            return Err(Error::Argument(format!(
                "observation period {} is not a positive integer multiple of dt {}",
                self.period, dt
            )));
        }
        Ok(rounded as usize)
    }

    /// `out = H x`.
    pub fn project(&self, x: &[f64], out: &mut [f64]) {
        let d = self.state_dim();
        for (j, o) in out.iter_mut().enumerate().take(self.rows) {
            let mut acc = 0.0;
            for k in 0..d {
                acc += self.h[j * d + k] * x[k];
            }
            *o = acc;
        }
    }

    /// Noisy observation `H x + sqrt(R) .* eps`.
    pub fn observe(&self, x: &[f64], eps: &[f64], out: &mut [f64]) {
        self.project(x, out);
        for j in 0..self.rows {
            out[j] += self.r_diag[j].sqrt() * eps[j];
        }
    }
}
