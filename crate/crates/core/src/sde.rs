//! Controlled diffusions with a scalar unknown parameter:
//! `dx = f(x, theta, u) dt + Sigma(x)^{1/2} dW`, with diagonal `Sigma`.
//!
//! This module holds the model abstraction, the Euler-Maruyama stepper, the
//! information integrand `|| df/dtheta ||^2_Sigma` that the policy solver
//! maximizes, and the log-likelihood of a fully observed path.

use crate::error::{Error, Result};
use crate::rng::NoiseStream;

/// Hard cap on the state dimension; lets hot loops use stack buffers.
pub const MAX_DIM: usize = 4;

/// A controlled diffusion with scalar parameter `theta`, scalar control `u`
/// and diagonal noise. All methods must be pure; models are shared freely
/// across threads.
pub trait DiffusionModel: Sync + Send {
    fn dim(&self) -> usize;

    fn name(&self) -> &'static str;

    /// Drift vector `f(x, theta, u)`.
    fn drift(&self, x: &[f64], theta: f64, u: f64, out: &mut [f64]);

    /// Elementwise derivative of the drift with respect to `theta`.
    fn drift_dtheta(&self, x: &[f64], theta: f64, u: f64, out: &mut [f64]);

    /// Diagonal of the diffusion matrix `Sigma(x)` (variances per unit time).
    fn diffusion_diag(&self, x: &[f64], out: &mut [f64]);

    /// Per-dimension closed intervals containing the dynamics of interest.
    fn state_bounds(&self) -> Vec<(f64, f64)>;

    /// Post-step projection for models with hard physical ranges (for
    /// example a gating variable). Default: no-op.
    fn clamp_state(&self, _x: &mut [f64]) {}
}

/// Source of control values queried once per step with the current state.
pub trait ControlSource {
    fn control(&mut self, x: &[f64], step: usize) -> f64;
}

/// Constant control.
pub struct ConstantControl(pub f64);

impl ControlSource for ConstantControl {
    fn control(&mut self, _x: &[f64], _step: usize) -> f64 {
        self.0
    }
}

/// Open-loop schedule indexed by step; the last entry is held beyond the end.
pub struct ScheduleControl<'a>(pub &'a [f64]);

impl ControlSource for ScheduleControl<'_> {
    fn control(&mut self, _x: &[f64], step: usize) -> f64 {
        self.0[step.min(self.0.len() - 1)]
    }
}

/// A discrete sample path: states `x_0 .. x_n` plus the control applied on
/// each of the `n` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub dim: usize,
    states: Vec<f64>,
    controls: Vec<f64>,
}

impl Trajectory {
    pub fn new(t0: f64, dt: f64, x0: &[f64]) -> Self {
        Self {
            t0,
            dt,
            dim: x0.len(),
            states: x0.to_vec(),
            controls: Vec::new(),
        }
    }

    pub fn push_step(&mut self, u: f64, x_next: &[f64]) {
        debug_assert_eq!(x_next.len(), self.dim);
        self.controls.push(u);
        self.states.extend_from_slice(x_next);
    }

    /// Number of stored states (`n_steps + 1`).
    pub fn n_states(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn n_steps(&self) -> usize {
        self.controls.len()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.n_states() - 1)
    }

    pub fn controls(&self) -> &[f64] {
        &self.controls
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// Append another path that starts where this one ends.
    pub fn concat(&mut self, other: &Trajectory) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::Argument("trajectory dimension mismatch".into()));
        }
        if other.n_steps() == 0 {
            return Ok(());
        }
        if other.state(0) != self.last_state() {
            return Err(Error::Argument(
                "trajectories do not join at a common state".into(),
            ));
        }
        for i in 0..other.n_steps() {
            self.push_step(other.controls[i], other.state(i + 1));
        }
        Ok(())
    }
}

/// One Euler-Maruyama step:
/// `x + f(x, theta, u) dt + sqrt(dt) * sqrt(Sigma_diag(x)) .* eps`.
///
/// Rejects non-finite results, naming the offending state.
#[inline]
pub fn euler_step(
    model: &dyn DiffusionModel,
    x: &[f64],
    theta: f64,
    u: f64,
    dt: f64,
    eps: &[f64],
    out: &mut [f64],
) -> Result<()> {
    debug_assert!(dt > 0.0);
    debug_assert_eq!(eps.len(), model.dim());
    let d = model.dim();
    let mut f = [0.0; MAX_DIM];
    let mut s = [0.0; MAX_DIM];
    model.drift(x, theta, u, &mut f[..d]);
    model.diffusion_diag(x, &mut s[..d]);
    let sqrt_dt = dt.sqrt();
    for k in 0..d {
        out[k] = x[k] + f[k] * dt + sqrt_dt * s[k].sqrt() * eps[k];
    }
    model.clamp_state(&mut out[..d]);
    if out[..d].iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericOverflow {
            context: format!(
                "state {:?} became {:?} (theta={theta}, u={u})",
                x,
                &out[..d]
            ),
        });
    }
    Ok(())
}

/// Simulate `n_steps` Euler-Maruyama steps, querying `source` once per step
/// with `(x_i, i)` and drawing the step-`i` deviate from `noise` at index
/// `i`. Fully reproducible given the stream.
pub fn simulate_path(
    model: &dyn DiffusionModel,
    x0: &[f64],
    theta: f64,
    source: &mut dyn ControlSource,
    dt: f64,
    n_steps: usize,
    noise: &NoiseStream,
) -> Result<Trajectory> {
    assert!(n_steps >= 1);
    let d = model.dim();
    let mut traj = Trajectory::new(0.0, dt, x0);
    let mut x = [0.0; MAX_DIM];
    let mut next = [0.0; MAX_DIM];
    let mut eps = [0.0; MAX_DIM];
    x[..d].copy_from_slice(x0);
    for i in 0..n_steps {
        let u = source.control(&x[..d], i);
        noise.fill_normals(i as u64, &mut eps[..d]);
        euler_step(model, &x[..d], theta, u, dt, &eps[..d], &mut next[..d]).map_err(|e| {
            Error::NumericOverflow {
                context: format!("step {i}: {e}"),
            }
        })?;
        traj.push_step(u, &next[..d]);
        x[..d].copy_from_slice(&next[..d]);
    }
    Ok(traj)
}

/// The information integrand `sum_k (df_k/dtheta)^2 / Sigma_kk(x)`.
///
/// Non-negative; the running reward of the policy solver.
pub fn fi_integrand(model: &dyn DiffusionModel, x: &[f64], theta: f64, u: f64) -> Result<f64> {
    let d = model.dim();
    let mut g = [0.0; MAX_DIM];
    let mut s = [0.0; MAX_DIM];
    model.drift_dtheta(x, theta, u, &mut g[..d]);
    model.diffusion_diag(x, &mut s[..d]);
    let mut total = 0.0;
    for k in 0..d {
        if s[k] <= 0.0 {
            return Err(Error::ZeroDiffusion { dim: k });
        }
        total += g[k] * g[k] / s[k];
    }
    Ok(total)
}

/// Log-likelihood of `theta` given a fully observed discrete path
/// (maximization convention):
/// `sum_i [ f' Sigma^{-1} (x_{i+1} - x_i) - 1/2 f' Sigma^{-1} f dt ]`
/// with `f` and `Sigma` evaluated at `x_i`.
///
/// Additive over path concatenation and zero for a drift-free model.
pub fn path_log_likelihood(model: &dyn DiffusionModel, traj: &Trajectory, theta: f64) -> Result<f64> {
    let d = model.dim();
    if traj.n_states() != traj.n_steps() + 1 {
        return Err(Error::Argument(format!(
            "trajectory has {} states but {} controls",
            traj.n_states(),
            traj.n_steps()
        )));
    }
    let dt = traj.dt;
    let mut f = [0.0; MAX_DIM];
    let mut s = [0.0; MAX_DIM];
    let mut ll = 0.0;
    for i in 0..traj.n_steps() {
        let x = traj.state(i);
        let xn = traj.state(i + 1);
        let u = traj.controls()[i];
        model.drift(x, theta, u, &mut f[..d]);
        model.diffusion_diag(x, &mut s[..d]);
        for k in 0..d {
            if s[k] <= 0.0 {
                return Err(Error::ZeroDiffusion { dim: k });
            }
            let fk = f[k] / s[k];
            ll += fk * (xn[k] - x[k]) - 0.5 * fk * f[k] * dt;
        }
    }
    Ok(ll)
}
