//! Ornstein-Uhlenbeck process with additive control:
//! `dx = (-beta x + u) dt + sigma dW`. Linear, so filter and estimator
//! behavior can be checked against closed forms; the mean-reversion rate
//! `beta` is the estimated parameter.

use crate::sde::DiffusionModel;

#[derive(Debug, Clone, PartialEq)]
pub struct OuParams {
    /// Mean-reversion rate (the estimand); stored value is the nominal truth.
    pub beta: f64,
    pub sigma: f64,
}

impl Default for OuParams {
    fn default() -> Self {
        Self {
            beta: 1.0,
            sigma: 0.5,
        }
    }
}

impl DiffusionModel for OuParams {
    fn dim(&self) -> usize {
        1
    }

    fn name(&self) -> &'static str {
        "ou"
    }

    fn drift(&self, x: &[f64], theta: f64, u: f64, out: &mut [f64]) {
        out[0] = -theta * x[0] + u;
    }

    fn drift_dtheta(&self, x: &[f64], _theta: f64, _u: f64, out: &mut [f64]) {
        out[0] = -x[0];
    }

    fn diffusion_diag(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = self.sigma * self.sigma;
    }

    fn state_bounds(&self) -> Vec<(f64, f64)> {
        vec![(-4.0, 4.0)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_arithmetic() {
        let p = OuParams::default();
        let mut f = [0.0];
        p.drift(&[0.0], 1.0, 0.0, &mut f);
        assert_eq!(f[0], 0.0);
        p.drift(&[2.0], 1.0, 3.0, &mut f);
        assert_eq!(f[0], 1.0);
    }
}
