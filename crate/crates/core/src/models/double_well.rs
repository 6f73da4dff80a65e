//! Particle in a double-well potential with a central Gaussian bump:
//! `V(x) = x^4 - 2 x^2 + A exp(-(x/w)^2 / 2)`,
//! `dx = (-V'(x) + u) dt + sigma dW`. The barrier height `A` is the
//! estimated parameter.

use crate::sde::DiffusionModel;

#[derive(Debug, Clone, PartialEq)]
pub struct DoubleWellParams {
    /// Barrier height (the estimand); stored value is the nominal truth.
    pub a: f64,
    /// Bump width.
    pub w: f64,
    /// Noise intensity.
    pub sigma: f64,
}

impl Default for DoubleWellParams {
    fn default() -> Self {
        Self {
            a: 3.84,
            w: 0.3,
            sigma: 0.1,
        }
    }
}

pub fn double_well_potential(x: f64, a: f64, w: f64) -> f64 {
    let q = x / w;
    x.powi(4) - 2.0 * x * x + a * (-0.5 * q * q).exp()
}

/// Drift `-V'(x) + u`.
pub fn double_well_drift(x: f64, a: f64, w: f64, u: f64) -> f64 {
    let q = x / w;
    -(4.0 * x.powi(3) - 4.0 * x - a * x / (w * w) * (-0.5 * q * q).exp()) + u
}

impl DiffusionModel for DoubleWellParams {
    fn dim(&self) -> usize {
        1
    }

    fn name(&self) -> &'static str {
        "double_well"
    }

    fn drift(&self, x: &[f64], theta: f64, u: f64, out: &mut [f64]) {
        out[0] = double_well_drift(x[0], theta, self.w, u);
    }

    fn drift_dtheta(&self, x: &[f64], _theta: f64, _u: f64, out: &mut [f64]) {
        let q = x[0] / self.w;
        out[0] = x[0] / (self.w * self.w) * (-0.5 * q * q).exp();
    }

    fn diffusion_diag(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = self.sigma * self.sigma;
    }

    fn state_bounds(&self) -> Vec<(f64, f64)> {
        vec![(-5.0, 5.0)]
    }
}
