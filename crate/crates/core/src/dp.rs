//! Finite-horizon backward induction over a controlled Markov chain.
//!
//! The value being maximized is the expected cumulative information reward
//! to the horizon ("information to go"). The unknown parameter is handled
//! with a weighted grid: one value table is kept per parameter value, and at
//! every (state, step) a single shared control is chosen to maximize the
//! weight-averaged one-step lookahead; every per-parameter table is then
//! updated under that shared control. A single averaged table would mix the
//! parameter-dependent transition laws and is deliberately avoided.
//!
//! Ties in the maximization break toward the lowest control index so that
//! solves are exactly reproducible.

use crate::error::{Error, Result};
use crate::mca::{validate, Grid, MCAConfig, McaChain};
use crate::sde::{ControlSource, DiffusionModel};
use rayon::prelude::*;

/// Ordered finite set of admissible control values.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet(Vec<f64>);

impl ControlSet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("control set must be non-empty".into()));
        }
        for (i, a) in values.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::Argument("control values must be finite".into()));
            }
            if values[i + 1..].contains(a) {
                return Err(Error::Argument(format!("duplicate control value {a}")));
            }
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, u: f64) -> bool {
        self.0.contains(&u)
    }
}

/// Discrete parameter prior: strictly increasing support with normalized
/// non-negative weights. Normalization divides by the weight sum, so
/// rescaling all weights by a power of two leaves every stored weight
/// bit-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorGrid {
    thetas: Vec<f64>,
    weights: Vec<f64>,
}

impl PriorGrid {
    /// Uniform prior on `[lo, hi]` discretized into `n` equally spaced
    /// values including both endpoints.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 1 || !(hi > lo) {
            return Err(Error::Argument(format!(
                "prior interval [{lo}, {hi}] with {n} points is invalid"
            )));
        }
        let thetas = (0..n)
            .map(|j| lo + (hi - lo) * j as f64 / (n - 1).max(1) as f64)
            .collect();
        Self::from_weighted(thetas, vec![1.0; n])
    }

    pub fn from_weighted(thetas: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if thetas.is_empty() || thetas.len() != weights.len() {
            return Err(Error::Argument("prior grid shape mismatch".into()));
        }
        if thetas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument(
                "prior support must be strictly increasing".into(),
            ));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Argument("prior weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Argument("prior weights sum to zero".into()));
        }
        Ok(Self {
            thetas,
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.thetas[0]
    }

    pub fn hi(&self) -> f64 {
        *self.thetas.last().unwrap()
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo() + self.hi())
    }

    pub fn spacing(&self) -> f64 {
        if self.thetas.len() < 2 {
            0.0
        } else {
            self.thetas[1] - self.thetas[0]
        }
    }
}

/// A finite-state controlled chain with parameter-dependent dynamics and a
/// per-step reward (already scaled by the chain time step).
pub trait ControlledChain: Sync {
    fn n_states(&self) -> usize;
    fn n_controls(&self) -> usize;
    fn n_params(&self) -> usize;
    /// Transition support and probabilities from `state` under
    /// `(param, control)`, as parallel slices.
    fn transitions(&self, state: usize, param: usize, control: usize) -> (&[u32], &[f64]);
    fn reward(&self, state: usize, param: usize, control: usize) -> f64;
}

/// Time-indexed control table on a grid: one control index per (step, cell).
/// Step 0 is the start of the experiment; the control stored at step `i`
/// applies on `[i*dt_h, (i+1)*dt_h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub model_name: String,
    pub grid: Grid,
    pub dt_h: f64,
    pub controls: ControlSet,
    pub prior: PriorGrid,
    pub n_steps: usize,
    /// `n_steps * n_cells` control indices, step-major.
    pub data: Vec<u8>,
}

impl PolicyTable {
    pub fn n_cells(&self) -> usize {
        self.grid.n_cells()
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt_h
    }

    pub fn slice(&self, step: usize) -> &[u8] {
        let c = self.n_cells();
        &self.data[step * c..(step + 1) * c]
    }

    /// Nearest time slice with ties toward the earlier step.
    pub fn step_for_time(&self, t: f64) -> usize {
        let i = (t / self.dt_h - 0.5).ceil();
        (i.max(0.0) as usize).min(self.n_steps - 1)
    }

    /// Control value at `(x, t)`: `x` is clamped to the grid and mapped to
    /// the nearest node, `t` to the nearest step. Outside the horizon the
    /// boundary slice is used and a warning is logged.
    pub fn lookup_control(&self, x: &[f64], t: f64) -> f64 {
        if t < 0.0 || t > self.horizon() {
            log::warn!(
                "policy queried at t={t} outside horizon [0, {}]; using boundary slice",
                self.horizon()
            );
        }
        let cell = self.grid.nearest_node(x);
        let idx = self.data[self.step_for_time(t) * self.n_cells() + cell];
        self.controls.values()[idx as usize]
    }

    /// The slice at step 0 together with the latest time up to which the
    /// policy is identical to it (allowing `tol` differing cells per slice).
    pub fn stationary_policy(&self, tol: usize) -> (Vec<u8>, f64) {
        let first = self.slice(0).to_vec();
        let mut last_step = 0;
        for step in 1..self.n_steps {
            let diff = self
                .slice(step)
                .iter()
                .zip(&first)
                .filter(|(a, b)| a != b)
                .count();
            if diff > tol {
                break;
            }
            last_step = step;
        }
        (first, last_step as f64 * self.dt_h)
    }
}

/// Per-parameter value tables on the grid at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub thetas: Vec<f64>,
    pub weights: Vec<f64>,
    pub n_cells: usize,
    /// Laid out cell-major: `cell * n_params + param`.
    pub data: Vec<f64>,
}

impl ValueTable {
    pub fn value(&self, cell: usize, param: usize) -> f64 {
        self.data[cell * self.thetas.len() + param]
    }

    /// Weight-averaged value at one cell.
    pub fn averaged(&self, cell: usize) -> f64 {
        let p = self.thetas.len();
        self.data[cell * p..(cell + 1) * p]
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v * w)
            .sum()
    }
}

/// Expected value at step 0 under a distribution over cells.
pub fn mean_payoff(values: &ValueTable, initial_distribution: &[f64]) -> f64 {
    debug_assert_eq!(initial_distribution.len(), values.n_cells);
    initial_distribution
        .iter()
        .enumerate()
        .filter(|(_, &p)| p != 0.0)
        .map(|(cell, &p)| p * values.averaged(cell))
        .sum()
}

/// Backward induction over `n_steps` decision epochs. Returns the policy
/// (step-major control indices) and the per-parameter values at step 0.
pub fn backward_induction<C: ControlledChain>(
    chain: &C,
    weights: &[f64],
    n_steps: usize,
) -> (Vec<u8>, Vec<f64>) {
    let s = chain.n_states();
    let np = chain.n_params();
    let nu = chain.n_controls();
    assert!(nu <= u8::MAX as usize + 1, "more than 256 controls");
    assert_eq!(weights.len(), np);
    let mut v_next = vec![0.0f64; s * np];
    let mut v_cur = vec![0.0f64; s * np];
    let mut policy = vec![0u8; n_steps * s];

    for step in (0..n_steps).rev() {
        let slice = &mut policy[step * s..(step + 1) * s];
        let v_next_ref = &v_next;
        slice
            .par_iter_mut()
            .zip(v_cur.par_chunks_mut(np))
            .enumerate()
            .for_each_init(
                || vec![0.0f64; np],
                |q, (cell, (pol, v_out))| {
                    let mut best_score = f64::NEG_INFINITY;
                    let mut best_u = 0usize;
                    for u in 0..nu {
                        let mut score = 0.0;
                        for k in 0..np {
                            let (targets, probs) = chain.transitions(cell, k, u);
                            let mut acc = 0.0;
                            for (t, p) in targets.iter().zip(probs) {
                                acc += p * v_next_ref[*t as usize * np + k];
                            }
                            q[k] = chain.reward(cell, k, u) + acc;
                            score += weights[k] * q[k];
                        }
                        if score > best_score {
                            best_score = score;
                            best_u = u;
                            v_out.copy_from_slice(q);
                        }
                    }
                    *pol = best_u as u8;
                },
            );
        std::mem::swap(&mut v_cur, &mut v_next);
    }
    (policy, v_next)
}

/// Solve for the information-maximizing policy of a diffusion over
/// `[0, horizon]`: validates the discretization, builds the approximating
/// chain, and runs backward induction.
pub fn solve_policy(
    model: &dyn DiffusionModel,
    grid: &Grid,
    cfg: &MCAConfig,
    controls: &ControlSet,
    prior: &PriorGrid,
    horizon: f64,
) -> Result<(PolicyTable, ValueTable)> {
    if !(horizon > 0.0) {
        return Err(Error::Argument("horizon must be positive".into()));
    }
    let report = validate(model, grid, cfg, prior.thetas(), controls.values());
    if !report.is_valid() {
        let &(node, dim, prob) = report.violations.first().unwrap();
        return Err(Error::Stability {
            node: vec![node],
            dim,
            prob,
        });
    }
    let n_steps = ((horizon / cfg.dt_h).round() as usize).max(1);
    let chain = McaChain::build(model, grid, cfg, prior.thetas(), controls.values())?;
    let (policy, values) = backward_induction(&chain, prior.weights(), n_steps);
    Ok((
        PolicyTable {
            model_name: model.name().to_string(),
            grid: grid.clone(),
            dt_h: cfg.dt_h,
            controls: controls.clone(),
            prior: prior.clone(),
            n_steps,
            data: policy,
        },
        ValueTable {
            thetas: prior.thetas().to_vec(),
            weights: prior.weights().to_vec(),
            n_cells: grid.n_cells(),
            data: values,
        },
    ))
}

/// Feedback control source that looks the policy up at the current state.
pub struct PolicyControl<'a> {
    pub policy: &'a PolicyTable,
    pub dt: f64,
}

impl ControlSource for PolicyControl<'_> {
    fn control(&mut self, x: &[f64], step: usize) -> f64 {
        self.policy.lookup_control(x, step as f64 * self.dt)
    }
}
