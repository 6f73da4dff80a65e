//! Shared helpers for the integration tests.
#![allow(dead_code)]

use oed_core::sde::DiffusionModel;

/// Tiny deterministic uniform generator for sampling test points
/// (splitmix64).
pub struct TestRng(pub u64);

impl TestRng {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}

/// 1-D model with zero drift and constant diffusion; `theta` and `u` are
/// ignored.
pub struct Still {
    pub sigma2: f64,
}

impl DiffusionModel for Still {
    fn dim(&self) -> usize {
        1
    }
    fn name(&self) -> &'static str {
        "still"
    }
    fn drift(&self, _x: &[f64], _theta: f64, _u: f64, out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn drift_dtheta(&self, _x: &[f64], _theta: f64, _u: f64, out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn diffusion_diag(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = self.sigma2;
    }
    fn state_bounds(&self) -> Vec<(f64, f64)> {
        vec![(-10.0, 10.0)]
    }
}

/// 1-D model with constant drift and constant diffusion.
pub struct ConstDrift {
    pub f: f64,
    pub sigma2: f64,
}

impl DiffusionModel for ConstDrift {
    fn dim(&self) -> usize {
        1
    }
    fn name(&self) -> &'static str {
        "const_drift"
    }
    fn drift(&self, _x: &[f64], _theta: f64, _u: f64, out: &mut [f64]) {
        out[0] = self.f;
    }
    fn drift_dtheta(&self, _x: &[f64], _theta: f64, _u: f64, out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn diffusion_diag(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = self.sigma2;
    }
    fn state_bounds(&self) -> Vec<(f64, f64)> {
        vec![(-100.0, 100.0)]
    }
}

/// Central finite difference of the drift in theta with step `h`.
pub fn drift_fd_theta(
    model: &dyn DiffusionModel,
    x: &[f64],
    theta: f64,
    u: f64,
    h: f64,
    out: &mut [f64],
) {
    let d = model.dim();
    let mut hi = [0.0; 4];
    let mut lo = [0.0; 4];
    model.drift(x, theta + h, u, &mut hi[..d]);
    model.drift(x, theta - h, u, &mut lo[..d]);
    for k in 0..d {
        out[k] = (hi[k] - lo[k]) / (2.0 * h);
    }
}
