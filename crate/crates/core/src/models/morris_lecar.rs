//! Morris-Lecar neuron with channel noise. State is `(v, w)`: membrane
//! voltage in mV and the potassium gating fraction in [0, 1]; time is in ms.
//!
//! ```text
//! dv = [ I - g_K w (v - v_K) - g_Ca m_inf(v) (v - v_Ca)
//!        - g_leak (v - v_leak) ] / C_m dt + beta_v dW1
//! dw = phi (w_inf(v) - w) / tau_w(v) dt + beta_w gamma(v, w) dW2
//! ```
//!
//! The control is `u = I / C_m`. The calcium conductance `g_Ca` is the
//! estimated parameter. `beta_v` is the noise intensity on `dv` itself
//! (after the division by `C_m`); this is the convention under which the
//! shipped defaults reproduce the reference estimator variances.
//! `gamma` scales the channel noise and comes from the underlying birth-
//! death channel model; its radicand is linear in `w` with non-negative
//! endpoint values, so it stays non-negative on the whole gating range.

use crate::error::{Error, Result};
use crate::sde::DiffusionModel;

#[derive(Debug, Clone, PartialEq)]
pub struct MorrisLecarParams {
    pub c_m: f64,
    pub g_k: f64,
    /// Calcium conductance (the estimand); stored value is the nominal truth.
    pub g_ca: f64,
    pub g_leak: f64,
    pub phi: f64,
    pub v_k: f64,
    pub v_leak: f64,
    pub v_ca: f64,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub v4: f64,
    /// Voltage noise intensity (mV per sqrt(ms), on dv).
    pub beta_v: f64,
    /// Channel noise intensity (multiplies gamma).
    pub beta_w: f64,
    /// Baseline current from the reference parameter table; kept for
    /// completeness, unused by the shipped experiments.
    pub i0: f64,
}

impl Default for MorrisLecarParams {
    fn default() -> Self {
        Self {
            c_m: 20.0,
            g_k: 8.0,
            g_ca: 4.41498308,
            g_leak: 2.0,
            phi: 0.04,
            v_k: -84.0,
            v_leak: -60.0,
            v_ca: 120.0,
            v1: -1.2,
            v2: 18.0,
            v3: 2.0,
            v4: 30.0,
            beta_v: 1.0,
            beta_w: 0.1,
            i0: 95.0,
        }
    }
}

/// Auxiliary gating curves `(m_inf, tau_w, w_inf)` at voltage `v`.
pub fn ml_aux(v: f64, p: &MorrisLecarParams) -> (f64, f64, f64) {
    let m_inf = 0.5 * (1.0 + ((v - p.v1) / p.v2).tanh());
    let tau_w = 1.0 / ((v - p.v3) / (2.0 * p.v4)).cosh();
    let w_inf = 0.5 * (1.0 + ((v - p.v3) / p.v4).tanh());
    (m_inf, tau_w, w_inf)
}

/// Channel-noise scale `sqrt( phi / tau_w(v) * (w_inf(v) (1 - 2w) + w) )`.
/// Errors on a negative radicand, which cannot occur for `w` in [0, 1].
pub fn ml_gamma(v: f64, w: f64, p: &MorrisLecarParams) -> Result<f64> {
    let (_, tau_w, w_inf) = ml_aux(v, p);
    let radicand = p.phi / tau_w * (w_inf * (1.0 - 2.0 * w) + w);
    if radicand < 0.0 {
        return Err(Error::Domain(format!(
            "gamma radicand {radicand} < 0 at v={v}, w={w}"
        )));
    }
    Ok(radicand.sqrt())
}

impl DiffusionModel for MorrisLecarParams {
    fn dim(&self) -> usize {
        2
    }

    fn name(&self) -> &'static str {
        "morris_lecar"
    }

    fn drift(&self, x: &[f64], theta: f64, u: f64, out: &mut [f64]) {
        let (v, w) = (x[0], x[1]);
        let (m_inf, tau_w, w_inf) = ml_aux(v, self);
        let ionic = self.g_k * w * (v - self.v_k)
            + theta * m_inf * (v - self.v_ca)
            + self.g_leak * (v - self.v_leak);
        out[0] = u - ionic / self.c_m;
        out[1] = self.phi * (w_inf - w) / tau_w;
    }

    fn drift_dtheta(&self, x: &[f64], _theta: f64, _u: f64, out: &mut [f64]) {
        let (m_inf, _, _) = ml_aux(x[0], self);
        out[0] = -m_inf * (x[0] - self.v_ca) / self.c_m;
        out[1] = 0.0;
    }

    fn diffusion_diag(&self, x: &[f64], out: &mut [f64]) {
        // Gating values are clamped to [0, 1] after every step, so the
        // radicand is non-negative here by construction.
        let w = x[1].clamp(0.0, 1.0);
        let (_, tau_w, w_inf) = ml_aux(x[0], self);
        let radicand = self.phi / tau_w * (w_inf * (1.0 - 2.0 * w) + w);
        out[0] = self.beta_v * self.beta_v;
        out[1] = self.beta_w * self.beta_w * radicand;
    }

    fn state_bounds(&self) -> Vec<(f64, f64)> {
        vec![(-80.0, 80.0), (0.0, 1.0)]
    }

    fn clamp_state(&self, x: &mut [f64]) {
        x[1] = x[1].clamp(0.0, 1.0);
    }
}
