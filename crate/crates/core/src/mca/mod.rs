//! Finite-state Markov chain approximation of a controlled diffusion.
//!
//! The discretization is a split-operator scheme on a regular grid with
//! spacing `h_d` and time step `dt_h`:
//!
//! * Step 1 (drift): with `c = |f_d| dt_h / h_d`, move `floor(c)` cells in
//!   the drift direction deterministically and one further cell with
//!   probability `c - floor(c)`. The conditional mean displacement is
//!   exactly `f_d dt_h`. For `c <= 1` this is the classic biased one-cell
//!   jump; the multi-cell extension keeps the scheme valid where strong
//!   controls push hard near the grid edges.
//! * Step 2 (diffusion): from the post-drift node `x'`, jump `+-r_d` cells
//!   with probability `Sigma_dd(x') mu_d / (2 r_d^2)` each, where
//!   `mu_d = dt_h / h_d^2`; stay otherwise. The conditional variance is
//!   exactly `Sigma_dd(x') dt_h`. The skip factor `r_d` relaxes the
//!   stability constraint `Sigma_dd mu_d / r_d^2 <= 1` at some accuracy
//!   cost.
//!
//! Dimensions are treated independently; any substep outcome that would
//! leave the grid is replaced by "stay", independently per substep and
//! dimension, so probability mass is conserved on the grid.

mod grid;

pub use grid::{AxisSpec, Grid};

use crate::dp::ControlledChain;
use crate::error::{Error, Result};
use crate::sde::{fi_integrand, DiffusionModel, MAX_DIM};
use rayon::prelude::*;
use std::fmt;

/// Discretization parameters: the chain time step and per-dimension skip
/// factors.
#[derive(Debug, Clone, PartialEq)]
pub struct MCAConfig {
    pub dt_h: f64,
    pub r: Vec<usize>,
}

impl MCAConfig {
    pub fn new(dt_h: f64, r: Vec<usize>) -> Result<Self> {
        if dt_h <= 0.0 {
            return Err(Error::Argument("dt_h must be positive".into()));
        }
        if r.iter().any(|&rd| rd == 0) {
            return Err(Error::Argument("skip factors must be >= 1".into()));
        }
        Ok(Self { dt_h, r })
    }

    /// Choose per-dimension skip factors
    /// `r_d = max(1, ceil(sqrt(max_node Sigma_dd * mu_d)))`, which
    /// guarantees the diffusion probability bound on the whole grid.
    pub fn auto(model: &dyn DiffusionModel, grid: &Grid, dt_h: f64) -> Result<Self> {
        let sigma_max = max_sigma_per_dim(model, grid);
        let r = (0..grid.dim())
            .map(|d| {
                let mu = dt_h / (grid.spacing(d) * grid.spacing(d));
                ((sigma_max[d] * mu).sqrt().ceil() as usize).max(1)
            })
            .collect();
        Self::new(dt_h, r)
    }

    pub fn mu(&self, grid: &Grid, d: usize) -> f64 {
        let h = grid.spacing(d);
        self.dt_h / (h * h)
    }
}

fn max_sigma_per_dim(model: &dyn DiffusionModel, grid: &Grid) -> Vec<f64> {
    let d = grid.dim();
    let mut x = [0.0; MAX_DIM];
    let mut s = [0.0; MAX_DIM];
    let mut out = vec![0.0f64; d];
    for cell in 0..grid.n_cells() {
        grid.node_coords(cell, &mut x[..d]);
        model.diffusion_diag(&x[..d], &mut s[..d]);
        for k in 0..d {
            out[k] = out[k].max(s[k]);
        }
    }
    out
}

/// Sparse one-substep transition law: multi-index offsets with their
/// probabilities. Probabilities always sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionStencil {
    pub dim: usize,
    pub entries: Vec<([i64; MAX_DIM], f64)>,
}

impl TransitionStencil {
    pub fn total_probability(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }
}

/// Per-dimension drift substep entries: at most two (extra cell taken or
/// not), with exact conditional mean `f_d dt_h / h_d` cells.
#[inline]
fn drift_entries(f_d: f64, dt_h: f64, h: f64) -> ([(i64, f64); 3], usize) {
    let c = f_d.abs() * dt_h / h;
    let sign = if f_d < 0.0 { -1 } else { 1 };
    let base = c.floor();
    let frac = c - base;
    let k = base as i64 * sign;
    if frac == 0.0 {
        ([(k, 1.0), (0, 0.0), (0, 0.0)], 1)
    } else {
        ([(k + sign, frac), (k, 1.0 - frac), (0, 0.0)], 2)
    }
}

/// Per-dimension diffusion substep entries; errors when the side
/// probability exceeds 1/2 (stability violation).
#[inline]
fn diffusion_entries(
    sigma_dd: f64,
    mu: f64,
    r: usize,
    node: &[usize],
    d: usize,
) -> Result<([(i64, f64); 3], usize)> {
    let p = 0.5 * sigma_dd * mu / (r * r) as f64;
    if !(0.0..=0.5).contains(&p) {
        return Err(Error::Stability {
            node: node.to_vec(),
            dim: d,
            prob: p,
        });
    }
    if p == 0.0 {
        Ok(([(0, 1.0), (0, 0.0), (0, 0.0)], 1))
    } else {
        Ok(([(r as i64, p), (-(r as i64), p), (0, 1.0 - 2.0 * p)], 3))
    }
}

/// Drift substep stencil at `node` (offsets relative to `node`, before the
/// boundary rule).
pub fn drift_stencil(
    model: &dyn DiffusionModel,
    grid: &Grid,
    node: usize,
    theta: f64,
    u: f64,
    dt_h: f64,
) -> TransitionStencil {
    let d = grid.dim();
    let mut x = [0.0; MAX_DIM];
    let mut f = [0.0; MAX_DIM];
    grid.node_coords(node, &mut x[..d]);
    model.drift(&x[..d], theta, u, &mut f[..d]);
    let mut per_dim = Vec::with_capacity(d);
    for k in 0..d {
        per_dim.push(drift_entries(f[k], dt_h, grid.spacing(k)));
    }
    product_stencil(d, &per_dim)
}

/// Diffusion substep stencil at the post-drift node (offsets relative to
/// it, before the boundary rule).
pub fn diffusion_stencil(
    model: &dyn DiffusionModel,
    grid: &Grid,
    node_after_drift: usize,
    dt_h: f64,
    r: &[usize],
) -> Result<TransitionStencil> {
    let d = grid.dim();
    let mut x = [0.0; MAX_DIM];
    let mut s = [0.0; MAX_DIM];
    let mut idx = [0usize; MAX_DIM];
    grid.node_coords(node_after_drift, &mut x[..d]);
    grid.multi_from_flat(node_after_drift, &mut idx[..d]);
    model.diffusion_diag(&x[..d], &mut s[..d]);
    let mut per_dim = Vec::with_capacity(d);
    for k in 0..d {
        let h = grid.spacing(k);
        let mu = dt_h / (h * h);
        per_dim.push(diffusion_entries(s[k], mu, r[k], &idx[..d], k)?);
    }
    Ok(product_stencil(d, &per_dim))
}

fn product_stencil(dim: usize, per_dim: &[([(i64, f64); 3], usize)]) -> TransitionStencil {
    let mut entries = Vec::new();
    let mut combo = [0usize; MAX_DIM];
    loop {
        let mut off = [0i64; MAX_DIM];
        let mut p = 1.0;
        for k in 0..dim {
            let (e, _) = per_dim[k];
            off[k] = e[combo[k]].0;
            p *= e[combo[k]].1;
        }
        if p > 0.0 {
            entries.push((off, p));
        }
        // advance mixed-radix counter
        let mut k = 0;
        loop {
            if k == dim {
                return TransitionStencil { dim, entries };
            }
            combo[k] += 1;
            if combo[k] < per_dim[k].1 {
                break;
            }
            combo[k] = 0;
            k += 1;
        }
    }
}

/// Enumerate the full composite step (drift then diffusion, boundary rule
/// applied per substep and dimension) from `node`, invoking `visit` with
/// each final flat node index and its probability. Diffusion coefficients
/// are evaluated at the post-drift node.
pub fn for_each_composite_outcome(
    model: &dyn DiffusionModel,
    grid: &Grid,
    cfg: &MCAConfig,
    node: usize,
    theta: f64,
    u: f64,
    visit: &mut dyn FnMut(usize, f64),
) -> Result<()> {
    let d = grid.dim();
    let mut x = [0.0; MAX_DIM];
    let mut f = [0.0; MAX_DIM];
    let mut idx = [0usize; MAX_DIM];
    grid.node_coords(node, &mut x[..d]);
    grid.multi_from_flat(node, &mut idx[..d]);
    model.drift(&x[..d], theta, u, &mut f[..d]);

    let mut drift_per_dim = [([(0i64, 0.0); 3], 0usize); MAX_DIM];
    for k in 0..d {
        drift_per_dim[k] = drift_entries(f[k], cfg.dt_h, grid.spacing(k));
    }

    let mut combo = [0usize; MAX_DIM];
    'drift: loop {
        let mut p_drift = 1.0;
        let mut post = [0usize; MAX_DIM];
        for k in 0..d {
            let (e, _) = drift_per_dim[k];
            p_drift *= e[combo[k]].1;
            let target = idx[k] as i64 + e[combo[k]].0;
            // exits are replaced by "stay at the current node"
            post[k] = if target < 0 || target >= grid.axes()[k].n as i64 {
                idx[k]
            } else {
                target as usize
            };
        }
        if p_drift > 0.0 {
            let mut xp = [0.0; MAX_DIM];
            for k in 0..d {
                xp[k] = grid.coord(k, post[k]);
            }
            let mut s = [0.0; MAX_DIM];
            model.diffusion_diag(&xp[..d], &mut s[..d]);
            let mut diff_per_dim = [([(0i64, 0.0); 3], 0usize); MAX_DIM];
            for k in 0..d {
                diff_per_dim[k] =
                    diffusion_entries(s[k], cfg.mu(grid, k), cfg.r[k], &post[..d], k)?;
            }
            let mut dcombo = [0usize; MAX_DIM];
            'diff: loop {
                let mut p = p_drift;
                let mut fin = [0usize; MAX_DIM];
                for k in 0..d {
                    let (e, _) = diff_per_dim[k];
                    p *= e[dcombo[k]].1;
                    let target = post[k] as i64 + e[dcombo[k]].0;
                    fin[k] = if target < 0 || target >= grid.axes()[k].n as i64 {
                        post[k]
                    } else {
                        target as usize
                    };
                }
                if p > 0.0 {
                    visit(grid.flat_from_multi(&fin[..d]), p);
                }
                let mut k = 0;
                loop {
                    if k == d {
                        break 'diff;
                    }
                    dcombo[k] += 1;
                    if dcombo[k] < diff_per_dim[k].1 {
                        break;
                    }
                    dcombo[k] = 0;
                    k += 1;
                }
            }
        }
        let mut k = 0;
        loop {
            if k == d {
                break 'drift;
            }
            combo[k] += 1;
            if combo[k] < drift_per_dim[k].1 {
                break;
            }
            combo[k] = 0;
            k += 1;
        }
    }
    Ok(())
}

/// Expectation of `v` after one composite step from `node` under
/// `(theta, u)`.
pub fn composite_expectation(
    model: &dyn DiffusionModel,
    grid: &Grid,
    cfg: &MCAConfig,
    v: &[f64],
    node: usize,
    theta: f64,
    u: f64,
) -> Result<f64> {
    let mut acc = 0.0;
    for_each_composite_outcome(model, grid, cfg, node, theta, u, &mut |t, p| {
        acc += p * v[t];
    })?;
    Ok(acc)
}

/// One dimension's validity summary.
#[derive(Debug, Clone)]
pub struct DimCheck {
    pub dim: usize,
    pub spacing: f64,
    pub mu: f64,
    pub r: usize,
    pub sigma_max: f64,
    pub max_side_prob: f64,
    /// Smallest skip factor that satisfies the probability bound at dt_h.
    pub min_valid_r: usize,
    /// Largest chain time step that the current skip factor admits.
    pub max_valid_dt_h: f64,
}

/// Validity scan over every (node, theta, control).
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub dims: Vec<DimCheck>,
    /// Largest drift displacement in cells and where it occurred.
    pub max_drift_cells: f64,
    pub max_drift_node: usize,
    pub violations: Vec<(usize, usize, f64)>,
    pub n_nodes: usize,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "discretization check over {} nodes: {}",
            self.n_nodes,
            if self.is_valid() { "valid" } else { "INVALID" }
        )?;
        for c in &self.dims {
            writeln!(
                f,
                "  dim {}: h={:.6} mu={:.4} r={} sigma_max={:.6e} max side prob={:.4} \
                 (min valid r={}, max valid dt_h={:.4e})",
                c.dim, c.spacing, c.mu, c.r, c.sigma_max, c.max_side_prob, c.min_valid_r,
                c.max_valid_dt_h
            )?;
        }
        writeln!(
            f,
            "  max drift displacement: {:.3} cells at node {}",
            self.max_drift_cells, self.max_drift_node
        )?;
        for (node, dim, prob) in self.violations.iter().take(10) {
            writeln!(f, "  violation: node {node} dim {dim} side prob {prob:.4}")?;
        }
        if self.violations.len() > 10 {
            writeln!(f, "  ... and {} more violations", self.violations.len() - 10)?;
        }
        Ok(())
    }
}

/// Scan every (node, theta, control): check the diffusion probability
/// bounds, report the largest drift-cell count, the minimal valid skip
/// factors and the largest admissible `dt_h`. Never aborts; violations are
/// returned in the report.
pub fn validate(
    model: &dyn DiffusionModel,
    grid: &Grid,
    cfg: &MCAConfig,
    thetas: &[f64],
    controls: &[f64],
) -> ValidationReport {
    let d = grid.dim();
    let mut x = [0.0; MAX_DIM];
    let mut s = [0.0; MAX_DIM];
    let mut f = [0.0; MAX_DIM];
    let mut sigma_max = vec![0.0f64; d];
    let mut max_side = vec![0.0f64; d];
    let mut violations = Vec::new();
    let mut max_drift = 0.0f64;
    let mut max_drift_node = 0;
    for node in 0..grid.n_cells() {
        grid.node_coords(node, &mut x[..d]);
        model.diffusion_diag(&x[..d], &mut s[..d]);
        for k in 0..d {
            sigma_max[k] = sigma_max[k].max(s[k]);
            let p = 0.5 * s[k] * cfg.mu(grid, k) / (cfg.r[k] * cfg.r[k]) as f64;
            max_side[k] = max_side[k].max(p);
            if p > 0.5 {
                violations.push((node, k, p));
            }
        }
        for &theta in thetas {
            for &u in controls {
                model.drift(&x[..d], theta, u, &mut f[..d]);
                for k in 0..d {
                    let c = f[k].abs() * cfg.dt_h / grid.spacing(k);
                    if c > max_drift {
                        max_drift = c;
                        max_drift_node = node;
                    }
                }
            }
        }
    }
    let dims = (0..d)
        .map(|k| {
            let mu = cfg.mu(grid, k);
            let h = grid.spacing(k);
            DimCheck {
                dim: k,
                spacing: h,
                mu,
                r: cfg.r[k],
                sigma_max: sigma_max[k],
                max_side_prob: max_side[k],
                min_valid_r: ((sigma_max[k] * mu).sqrt().ceil() as usize).max(1),
                max_valid_dt_h: if sigma_max[k] > 0.0 {
                    (cfg.r[k] * cfg.r[k]) as f64 * h * h / sigma_max[k]
                } else {
                    f64::INFINITY
                },
            }
        })
        .collect();
    ValidationReport {
        dims,
        max_drift_cells: max_drift,
        max_drift_node,
        violations,
        n_nodes: grid.n_cells(),
    }
}

/// Precomputed controlled Markov chain: merged composite stencils and
/// per-step information rewards for every (node, theta, control).
pub struct McaChain {
    n_cells: usize,
    n_params: usize,
    n_controls: usize,
    // CSR layout over (cell, param, control)
    starts: Vec<u32>,
    targets: Vec<u32>,
    probs: Vec<f64>,
    /// fi_integrand * dt_h, laid out as cell * n_params + param.
    rewards: Vec<f64>,
}

impl McaChain {
    pub fn build(
        model: &dyn DiffusionModel,
        grid: &Grid,
        cfg: &MCAConfig,
        thetas: &[f64],
        controls: &[f64],
    ) -> Result<Self> {
        let n_cells = grid.n_cells();
        let n_params = thetas.len();
        let n_controls = controls.len();
        let d = grid.dim();

        let per_cell: Vec<Result<(Vec<Vec<(u32, f64)>>, Vec<f64>)>> = (0..n_cells)
            .into_par_iter()
            .map(|cell| {
                let mut merged: Vec<(u32, f64)> = Vec::new();
                let mut entries = Vec::new();
                let mut rewards = Vec::with_capacity(n_params);
                let mut x = [0.0; MAX_DIM];
                grid.node_coords(cell, &mut x[..d]);
                for &theta in thetas {
                    rewards.push(fi_integrand(model, &x[..d], theta, 0.0)? * cfg.dt_h);
                    for &u in controls {
                        merged.clear();
                        for_each_composite_outcome(
                            model,
                            grid,
                            cfg,
                            cell,
                            theta,
                            u,
                            &mut |t, p| {
                                match merged.iter_mut().find(|e| e.0 == t as u32) {
                                    Some(e) => e.1 += p,
                                    None => merged.push((t as u32, p)),
                                }
                            },
                        )?;
                        merged.sort_unstable_by_key(|e| e.0);
                        debug_assert!(
                            (merged.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-12
                        );
                        entries.push(merged.clone());
                    }
                }
                Ok((entries, rewards))
            })
            .collect();

        let mut starts = Vec::with_capacity(n_cells * n_params * n_controls + 1);
        starts.push(0u32);
        let mut targets = Vec::new();
        let mut probs = Vec::new();
        let mut rewards = Vec::with_capacity(n_cells * n_params);
        for res in per_cell {
            let (lists, rw) = res?;
            for list in lists {
                for (t, p) in list {
                    targets.push(t);
                    probs.push(p);
                }
                starts.push(targets.len() as u32);
            }
            rewards.extend(rw);
        }
        Ok(Self {
            n_cells,
            n_params,
            n_controls,
            starts,
            targets,
            probs,
            rewards,
        })
    }
}

impl ControlledChain for McaChain {
    fn n_states(&self) -> usize {
        self.n_cells
    }

    fn n_controls(&self) -> usize {
        self.n_controls
    }

    fn n_params(&self) -> usize {
        self.n_params
    }

    fn transitions(&self, state: usize, param: usize, control: usize) -> (&[u32], &[f64]) {
        let idx = (state * self.n_params + param) * self.n_controls + control;
        let a = self.starts[idx] as usize;
        let b = self.starts[idx + 1] as usize;
        (&self.targets[a..b], &self.probs[a..b])
    }

    fn reward(&self, state: usize, param: usize, _control: usize) -> f64 {
        self.rewards[state * self.n_params + param]
    }
}
