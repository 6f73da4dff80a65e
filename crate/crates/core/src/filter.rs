//! Particle filtering with conditional Gaussian observation updates.
//!
//! Observations are linear in the state with Gaussian noise, so instead of
//! weighting and resampling, every particle's step noise at an observation
//! time is drawn from the Gaussian conditioned on the incoming observation
//! (the optimal proposal). The per-observation likelihood increment is the
//! particle-averaged predictive density of the observation under the
//! pre-update Gaussian `N(H m_i, H C_i H' + R)`, where `m_i` is the particle
//! after the drift and `C_i = dt * Sigma(x_i)`.
//!
//! Likelihood curves are evaluated over a parameter grid with same-noise
//! coupling: particle `i` consumes the identical deviates at every grid
//! value, which makes the curve smooth in the parameter and cuts its
//! Monte-Carlo variance.
//!
//! No weights means no degeneracy in the classical sense, but the ensemble
//! can still collapse when observations are very informative relative to the
//! process noise; `min_spread` tracks the smallest ensemble spread seen so
//! users can detect that regime.

use crate::error::{Error, Result};
use crate::models::ObservationModel;
use crate::rng::NoiseStream;
use crate::sde::{DiffusionModel, MAX_DIM};

const MAX_OBS: usize = MAX_DIM;

/// Log-likelihood over a parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodCurve {
    pub thetas: Vec<f64>,
    pub log_lik: Vec<f64>,
}

impl LikelihoodCurve {
    pub fn max_index(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.log_lik.iter().enumerate() {
            if v > self.log_lik[best] {
                best = i;
            }
        }
        best
    }
}

/// Grid maximum-likelihood estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct MleResult {
    pub estimate: f64,
    /// False exactly when the grid maximum sits at an endpoint; the
    /// estimate is then that endpoint.
    pub in_range: bool,
    pub curve: LikelihoodCurve,
}

/// Maximize a tabulated log-likelihood: an interior grid maximum is refined
/// by 3-point quadratic interpolation; an endpoint maximum is returned as
/// the (capped) estimate with `in_range = false`. A flat interior triple
/// returns the grid point itself.
pub fn grid_mle(curve: LikelihoodCurve) -> Result<MleResult> {
    let m = curve.thetas.len();
    if m < 3 {
        return Err(Error::Argument(format!(
            "grid MLE needs at least 3 points, got {m}"
        )));
    }
    if curve.log_lik.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("non-finite log-likelihood value".into()));
    }
    let j = curve.max_index();
    if j == 0 || j == m - 1 {
        return Ok(MleResult {
            estimate: curve.thetas[j],
            in_range: false,
            curve,
        });
    }
    let (lm, l0, lp) = (curve.log_lik[j - 1], curve.log_lik[j], curve.log_lik[j + 1]);
    let h = 0.5 * (curve.thetas[j + 1] - curve.thetas[j - 1]);
    let denom = lm - 2.0 * l0 + lp;
    let estimate = if denom == 0.0 {
        curve.thetas[j]
    } else {
        curve.thetas[j] + 0.5 * h * (lm - lp) / denom
    };
    Ok(MleResult {
        estimate,
        in_range: true,
        curve,
    })
}

/// Coupled particle ensembles, one per parameter-grid value, sharing noise
/// streams by particle index. Accumulates the per-parameter log-likelihood.
pub struct ParticleEnsemble {
    dim: usize,
    n: usize,
    thetas: Vec<f64>,
    /// States laid out `[theta][particle][dim]`.
    states: Vec<f64>,
    log_lik: Vec<f64>,
    noise: NoiseStream,
    /// Noise index of the next step; one index is consumed per step whether
    /// the step is unconditional or conditioned on an observation.
    step: u64,
    buf: Vec<f64>,
    /// Smallest observed ensemble spread (see module docs).
    pub min_spread: f64,
}

impl ParticleEnsemble {
    /// All particles start at the known state `x0`; particle `i` reads the
    /// stream `base_stream + i` for every parameter value.
    pub fn new(dim: usize, thetas: Vec<f64>, n: usize, x0: &[f64], noise: NoiseStream) -> Self {
        assert!(dim <= MAX_DIM && !thetas.is_empty() && n > 0);
        let m = thetas.len();
        let mut states = Vec::with_capacity(m * n * dim);
        for _ in 0..m * n {
            states.extend_from_slice(x0);
        }
        Self {
            dim,
            n,
            log_lik: vec![0.0; m],
            thetas,
            states,
            noise,
            step: 0,
            buf: vec![0.0; n * dim],
            min_spread: f64::INFINITY,
        }
    }

    pub fn n_particles(&self) -> usize {
        self.n
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn log_lik(&self) -> &[f64] {
        &self.log_lik
    }

    pub fn states(&self, theta_idx: usize) -> &[f64] {
        &self.states[theta_idx * self.n * self.dim..(theta_idx + 1) * self.n * self.dim]
    }

    /// Ensemble mean for one parameter value.
    pub fn mean(&self, theta_idx: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let s = self.states(theta_idx);
        for i in 0..self.n {
            for k in 0..self.dim {
                out[k] += s[i * self.dim + k];
            }
        }
        for v in &mut out {
            *v /= self.n as f64;
        }
        out
    }

    fn fill_shared_noise(&mut self) {
        for i in 0..self.n {
            let stream = self.noise.offset(i as u64);
            stream.fill_normals(self.step, &mut self.buf[i * self.dim..(i + 1) * self.dim]);
        }
    }

    /// Advance every particle one unconditional Euler step under its own
    /// parameter value, consuming one shared deviate per particle index.
    pub fn propagate(&mut self, model: &dyn DiffusionModel, u: f64, dt: f64) -> Result<()> {
        self.fill_shared_noise();
        let d = self.dim;
        let mut next = [0.0; MAX_DIM];
        for (ti, &theta) in self.thetas.iter().enumerate() {
            let base = ti * self.n * d;
            for i in 0..self.n {
                let x = &self.states[base + i * d..base + (i + 1) * d];
                crate::sde::euler_step(
                    model,
                    x,
                    theta,
                    u,
                    dt,
                    &self.buf[i * d..(i + 1) * d],
                    &mut next[..d],
                )?;
                self.states[base + i * d..base + (i + 1) * d].copy_from_slice(&next[..d]);
            }
        }
        self.step += 1;
        Ok(())
    }

    /// Advance one step with the Gaussian disturbance sampled conditional on
    /// the observation `y`, and return the per-parameter log-likelihood
    /// increments `log( mean_i N(y; H m_i, H C_i H' + R) )`, which are also
    /// accumulated internally.
    pub fn conditional_update(
        &mut self,
        model: &dyn DiffusionModel,
        obs: &ObservationModel,
        y: &[f64],
        u: f64,
        dt: f64,
    ) -> Result<Vec<f64>> {
        self.fill_shared_noise();
        let d = self.dim;
        let rows = obs.rows;
        let mut increments = Vec::with_capacity(self.thetas.len());
        let mut f = [0.0; MAX_DIM];
        let mut sig = [0.0; MAX_DIM];
        let mut m = [0.0; MAX_DIM];
        let mut hm = [0.0; MAX_OBS];
        let mut resid = [0.0; MAX_OBS];
        let mut s_mat = [0.0; MAX_OBS * MAX_OBS];
        let mut gain = [0.0; MAX_DIM * MAX_OBS];
        let mut post_cov = [0.0; MAX_DIM * MAX_DIM];
        let mut new_state = [0.0; MAX_DIM];

        for ti in 0..self.thetas.len() {
            let theta = self.thetas[ti];
            let base = ti * self.n * d;
            let mut log_sum = f64::NEG_INFINITY;
            for i in 0..self.n {
                let x = &self.states[base + i * d..base + (i + 1) * d];
                model.drift(x, theta, u, &mut f[..d]);
                model.diffusion_diag(x, &mut sig[..d]);
                for k in 0..d {
                    m[k] = x[k] + f[k] * dt;
                    sig[k] *= dt; // step covariance C = dt * Sigma(x)
                }
                obs.project(&m[..d], &mut hm[..rows]);
                for j in 0..rows {
                    resid[j] = y[j] - hm[j];
                }
                // S = H C H' + R
                for a in 0..rows {
                    for b in 0..rows {
                        let mut acc = 0.0;
                        for k in 0..d {
                            acc += obs.h[a * d + k] * sig[k] * obs.h[b * d + k];
                        }
                        if a == b {
                            acc += obs.r_diag[a];
                        }
                        s_mat[a * rows + b] = acc;
                    }
                }
                let chol = cholesky(rows, &s_mat[..rows * rows]).map_err(|_| {
                    Error::SingularInnovation(format!(
                        "S singular at particle {i}, theta {theta}"
                    ))
                })?;
                log_sum = log_add_exp(log_sum, gaussian_logpdf(rows, &resid[..rows], &chol));

                // K = C H' S^{-1}
                for k in 0..d {
                    let mut rhs = [0.0; MAX_OBS];
                    for j in 0..rows {
                        rhs[j] = sig[k] * obs.h[j * d + k];
                    }
                    chol_solve(rows, &chol, &mut rhs[..rows]);
                    for j in 0..rows {
                        gain[k * rows + j] = rhs[j];
                    }
                }
                // P = (I - K H) C, symmetrized
                for a in 0..d {
                    for b in 0..d {
                        let mut acc = if a == b { sig[a] } else { 0.0 };
                        for j in 0..rows {
                            acc -= gain[a * rows + j] * obs.h[j * d + b] * sig[b];
                        }
                        post_cov[a * d + b] = acc;
                    }
                }
                for a in 0..d {
                    for b in 0..a {
                        let sym = 0.5 * (post_cov[a * d + b] + post_cov[b * d + a]);
                        post_cov[a * d + b] = sym;
                        post_cov[b * d + a] = sym;
                    }
                }
                let post_chol = cholesky_psd(d, &post_cov[..d * d]).map_err(|_| {
                    Error::SingularInnovation(format!(
                        "posterior covariance not PSD at particle {i}"
                    ))
                })?;
                // x' = m + K (y - H m) + L z
                let z = &self.buf[i * d..(i + 1) * d];
                for k in 0..d {
                    let mut v = m[k];
                    for j in 0..rows {
                        v += gain[k * rows + j] * resid[j];
                    }
                    for l in 0..=k {
                        v += post_chol[k * d + l] * z[l];
                    }
                    new_state[k] = v;
                }
                model.clamp_state(&mut new_state[..d]);
                if new_state[..d].iter().any(|v| !v.is_finite()) {
                    return Err(Error::NumericOverflow {
                        context: format!("conditional update produced {new_state:?}"),
                    });
                }
                self.states[base + i * d..base + (i + 1) * d]
                    .copy_from_slice(&new_state[..d]);
            }
            let inc = log_sum - (self.n as f64).ln();
            self.log_lik[ti] += inc;
            increments.push(inc);
        }
        self.step += 1;
        self.track_spread();
        Ok(increments)
    }

    fn track_spread(&mut self) {
        let d = self.dim;
        for ti in 0..self.thetas.len() {
            let s = self.states(ti);
            let mut spread2 = 0.0;
            for k in 0..d {
                let mut sum = 0.0;
                let mut sum2 = 0.0;
                for i in 0..self.n {
                    let v = s[i * d + k];
                    sum += v;
                    sum2 += v * v;
                }
                let mean = sum / self.n as f64;
                spread2 += (sum2 / self.n as f64 - mean * mean).max(0.0);
            }
            self.min_spread = self.min_spread.min(spread2.sqrt());
        }
    }
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Lower Cholesky factor of a strictly positive definite matrix.
fn cholesky(n: usize, a: &[f64]) -> Result<[f64; MAX_OBS * MAX_OBS]> {
    let mut l = [0.0; MAX_OBS * MAX_OBS];
    factorize(n, a, &mut l, false)?;
    Ok(l)
}

/// Lower Cholesky factor allowing semi-definite directions (zero pivots).
fn cholesky_psd(n: usize, a: &[f64]) -> Result<[f64; MAX_DIM * MAX_DIM]> {
    let mut l = [0.0; MAX_DIM * MAX_DIM];
    factorize(n, a, &mut l, true)?;
    Ok(l)
}

fn factorize(n: usize, a: &[f64], l: &mut [f64], allow_semidefinite: bool) -> Result<()> {
    let scale = (0..n).map(|k| a[k * n + k].abs()).fold(0.0f64, f64::max);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a[i * n + j];
            for k in 0..j {
                acc -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if acc <= 0.0 {
                    // tolerate rounding-level negatives on PSD matrices
                    if allow_semidefinite && acc > -1e-12 * scale.max(1e-300) {
                        acc = 0.0;
                    } else {
                        return Err(Error::SingularInnovation(format!(
                            "pivot {acc} at row {i}"
                        )));
                    }
                }
                l[i * n + j] = acc.sqrt();
            } else {
                let piv = l[j * n + j];
                l[i * n + j] = if piv == 0.0 {
                    if acc.abs() > 1e-10 * scale.max(1e-300) {
                        return Err(Error::SingularInnovation(
                            "inconsistent semidefinite column".into(),
                        ));
                    }
                    0.0
                } else {
                    acc / piv
                };
            }
        }
    }
    Ok(())
}

/// Solve `(L L') x = rhs` in place.
fn chol_solve(n: usize, l: &[f64], rhs: &mut [f64]) {
    for i in 0..n {
        let mut acc = rhs[i];
        for k in 0..i {
            acc -= l[i * n + k] * rhs[k];
        }
        rhs[i] = acc / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut acc = rhs[i];
        for k in i + 1..n {
            acc -= l[k * n + i] * rhs[k];
        }
        rhs[i] = acc / l[i * n + i];
    }
}

/// Log-density of `N(0, L L')` at `resid`.
fn gaussian_logpdf(n: usize, resid: &[f64], l: &[f64]) -> f64 {
    // forward solve L z = resid
    let mut z = [0.0; MAX_OBS];
    for i in 0..n {
        let mut acc = resid[i];
        for k in 0..i {
            acc -= l[i * n + k] * z[k];
        }
        z[i] = acc / l[i * n + i];
    }
    let mut logdet = 0.0;
    let mut quad = 0.0;
    for i in 0..n {
        logdet += l[i * n + i].ln();
        quad += z[i] * z[i];
    }
    -0.5 * (quad + n as f64 * (2.0 * std::f64::consts::PI).ln()) - logdet
}

/// Full filtering pass over a recorded observation sequence.
///
/// `controls[j]` is held on the interval `[j*period, (j+1)*period)`; the
/// `j`-th observation arrives at `(j+1)*period` and conditions the final
/// substep of that interval. Returns the likelihood curve over `thetas`,
/// the state-estimate sequence (ensemble mean of `designated` after each
/// update), and the collapse diagnostic.
#[allow(clippy::too_many_arguments)]
pub fn run_filter(
    model: &dyn DiffusionModel,
    obs: &ObservationModel,
    observations: &[Vec<f64>],
    thetas: &[f64],
    controls: &[f64],
    dt: f64,
    n_particles: usize,
    x0: &[f64],
    noise: NoiseStream,
    designated: usize,
) -> Result<(LikelihoodCurve, Vec<Vec<f64>>, f64)> {
    if controls.len() != observations.len() {
        return Err(Error::Argument(format!(
            "{} observations but {} control intervals",
            observations.len(),
            controls.len()
        )));
    }
    let sub_steps = obs.steps_per_observation(dt)?;
    let mut ensemble =
        ParticleEnsemble::new(model.dim(), thetas.to_vec(), n_particles, x0, noise);
    let mut estimates = Vec::with_capacity(observations.len());
    for (j, y) in observations.iter().enumerate() {
        let u = controls[j];
        for _ in 0..sub_steps - 1 {
            ensemble.propagate(model, u, dt)?;
        }
        ensemble.conditional_update(model, obs, y, u, dt)?;
        estimates.push(ensemble.mean(designated));
    }
    let curve = LikelihoodCurve {
        thetas: thetas.to_vec(),
        log_lik: ensemble.log_lik().to_vec(),
    };
    Ok((curve, estimates, ensemble.min_spread))
}
