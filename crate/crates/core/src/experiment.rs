//! Closed-loop simulated experiments and batch statistics.
//!
//! One trial: simulate the true system; at each observation produce a noisy
//! measurement; feed it to a single-parameter control filter whose state
//! estimate is looked up in the policy (controls are held between
//! observations); after the horizon, evaluate the likelihood of the recorded
//! data over the parameter grid and take the grid MLE. Under full
//! observation the control reads the true state every step and the
//! likelihood is computed directly from the path.
//!
//! ## Noise-stream layout
//!
//! Everything a trial consumes is drawn from counter-based streams derived
//! from the experiment seed, so a trial is reproducible from
//! `(config, trial_index)` alone and batches can run in any parallel order:
//!
//! ```text
//! stream id = trial_index * 2^24 + role * 2^20 + particle/channel index
//! role 0 = true-system dynamics   role 2 = control-filter particles
//! role 1 = observation noise      role 3 = estimation-filter particles
//! ```

use crate::dp::{PolicyTable, PriorGrid};
use crate::error::{Error, Result};
use crate::filter::{grid_mle, LikelihoodCurve, MleResult, ParticleEnsemble};
use crate::models::ObservationModel;
use crate::rng::NoiseStream;
use crate::sde::{
    euler_step, fi_integrand, path_log_likelihood, simulate_path, ConstantControl,
    ControlSource, DiffusionModel, Trajectory, MAX_DIM,
};
use rayon::prelude::*;

pub const ROLE_TRUTH: u64 = 0;
pub const ROLE_OBSERVATION: u64 = 1;
pub const ROLE_CONTROL_FILTER: u64 = 2;
pub const ROLE_ESTIMATION_FILTER: u64 = 3;

const TRIAL_SHIFT: u64 = 24;
const ROLE_SHIFT: u64 = 20;

/// Stream id for `(trial, role, index)`; see the module docs.
pub fn stream_id(trial: u64, role: u64, index: u64) -> u64 {
    debug_assert!(role < 1 << (TRIAL_SHIFT - ROLE_SHIFT));
    debug_assert!(index < 1 << ROLE_SHIFT);
    (trial << TRIAL_SHIFT) + (role << ROLE_SHIFT) + index
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlMode {
    /// Look controls up in a precomputed policy.
    Dynamic,
    /// Hold one constant value for the whole experiment.
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObservationRegime {
    /// The full state is observed noiselessly at every step.
    Full,
    /// Noisy linear observations on a fixed period.
    Partial(ObservationModel),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub true_theta: f64,
    pub prior: PriorGrid,
    pub control: ControlMode,
    pub regime: ObservationRegime,
    pub dt: f64,
    pub horizon: f64,
    pub n_particles: usize,
    pub n_trials: usize,
    pub base_seed: u64,
    pub x0: Vec<f64>,
    /// Parameter value the control filter runs at; defaults to the prior
    /// midpoint.
    pub control_theta: Option<f64>,
    /// Keep trajectories and observation records on the trial results.
    pub retain_paths: bool,
}

impl ExperimentConfig {
    fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    fn control_filter_theta(&self) -> f64 {
        self.control_theta.unwrap_or_else(|| self.prior.midpoint())
    }
}

/// Outcome of one closed-loop trial.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial: u64,
    pub estimate: f64,
    pub in_range: bool,
    pub curve: LikelihoodCurve,
    /// Realized information along the true path at the true parameter.
    pub realized_payoff: f64,
    pub filter_min_spread: Option<f64>,
    pub trajectory: Option<Trajectory>,
    pub observations: Option<Vec<(f64, Vec<f64>)>>,
    pub interval_controls: Option<Vec<f64>>,
}

/// Batch aggregation over trials; out-of-range estimates are already capped
/// at the prior endpoint by the grid MLE and are included in the moments.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStats {
    pub n_trials: usize,
    pub n_errors: usize,
    pub in_range_frac: f64,
    pub mean: f64,
    pub bias: f64,
    pub std_dev: f64,
    pub std_dev_err: f64,
}

impl SummaryStats {
    pub fn from_estimates(estimates: &[f64], in_range: &[bool], true_theta: f64) -> Self {
        let n = estimates.len();
        assert!(n >= 2, "need at least two trials for a standard deviation");
        let mean = estimates.iter().sum::<f64>() / n as f64;
        let var = estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>()
            / (n - 1) as f64;
        let std_dev = var.sqrt();
        Self {
            n_trials: n,
            n_errors: 0,
            in_range_frac: in_range.iter().filter(|&&b| b).count() as f64 / n as f64,
            mean,
            bias: mean - true_theta,
            std_dev,
            std_dev_err: std_dev / (2.0 * (n as f64 - 1.0)).sqrt(),
        }
    }
}

#[derive(Debug)]
pub struct BatchResult {
    pub stats: SummaryStats,
    pub trials: Vec<TrialResult>,
    pub failures: Vec<(u64, String)>,
}

fn designated_index(prior: &PriorGrid) -> usize {
    let mid = prior.midpoint();
    let mut best = 0;
    let mut dist = f64::INFINITY;
    for (i, &t) in prior.thetas().iter().enumerate() {
        if (t - mid).abs() < dist {
            dist = (t - mid).abs();
            best = i;
        }
    }
    best
}

/// Run a single trial. Deterministic in `(config, trial_index)`.
pub fn run_trial(
    model: &dyn DiffusionModel,
    cfg: &ExperimentConfig,
    policy: Option<&PolicyTable>,
    trial: u64,
) -> Result<TrialResult> {
    let wrap = |e: Error| Error::Trial {
        trial,
        source: Box::new(e),
    };
    match (&cfg.control, policy) {
        (ControlMode::Dynamic, None) => {
            return Err(Error::Argument(
                "dynamic control mode requires a policy".into(),
            ))
        }
        (ControlMode::Dynamic, Some(p)) => {
            if p.horizon() < cfg.horizon - 1e-9 {
                return Err(Error::Argument(format!(
                    "policy horizon {} is shorter than the experiment horizon {}",
                    p.horizon(),
                    cfg.horizon
                )));
            }
        }
        _ => {}
    }
    match &cfg.regime {
        ObservationRegime::Full => run_trial_full(model, cfg, policy, trial).map_err(wrap),
        ObservationRegime::Partial(obs) => {
            run_trial_partial(model, cfg, policy, obs, trial).map_err(wrap)
        }
    }
}

fn curve_over_prior(
    model: &dyn DiffusionModel,
    traj: &Trajectory,
    prior: &PriorGrid,
) -> Result<LikelihoodCurve> {
    let mut log_lik = Vec::with_capacity(prior.len());
    for &theta in prior.thetas() {
        log_lik.push(path_log_likelihood(model, traj, theta)?);
    }
    Ok(LikelihoodCurve {
        thetas: prior.thetas().to_vec(),
        log_lik,
    })
}

fn realized_payoff(
    model: &dyn DiffusionModel,
    traj: &Trajectory,
    true_theta: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..traj.n_steps() {
        total +=
            fi_integrand(model, traj.state(i), true_theta, traj.controls()[i])? * traj.dt;
    }
    Ok(total)
}

fn run_trial_full(
    model: &dyn DiffusionModel,
    cfg: &ExperimentConfig,
    policy: Option<&PolicyTable>,
    trial: u64,
) -> Result<TrialResult> {
    let noise = NoiseStream::new(cfg.base_seed, stream_id(trial, ROLE_TRUTH, 0));
    let mut constant;
    let mut dynamic;
    let source: &mut dyn ControlSource = match cfg.control {
        ControlMode::Constant(u) => {
            constant = ConstantControl(u);
            &mut constant
        }
        ControlMode::Dynamic => {
            dynamic = crate::dp::PolicyControl {
                policy: policy.unwrap(),
                dt: cfg.dt,
            };
            &mut dynamic
        }
    };
    let traj = simulate_path(
        model,
        &cfg.x0,
        cfg.true_theta,
        source,
        cfg.dt,
        cfg.n_steps(),
        &noise,
    )?;
    let payoff = realized_payoff(model, &traj, cfg.true_theta)?;
    let curve = curve_over_prior(model, &traj, &cfg.prior)?;
    let mle = grid_mle(curve)?;
    Ok(TrialResult {
        trial,
        estimate: mle.estimate,
        in_range: mle.in_range,
        curve: mle.curve,
        realized_payoff: payoff,
        filter_min_spread: None,
        trajectory: cfg.retain_paths.then_some(traj),
        observations: None,
        interval_controls: None,
    })
}

fn run_trial_partial(
    model: &dyn DiffusionModel,
    cfg: &ExperimentConfig,
    policy: Option<&PolicyTable>,
    obs: &ObservationModel,
    trial: u64,
) -> Result<TrialResult> {
    let d = model.dim();
    let sub = obs.steps_per_observation(cfg.dt)?;
    let n_steps = cfg.n_steps();
    let truth = NoiseStream::new(cfg.base_seed, stream_id(trial, ROLE_TRUTH, 0));
    let obs_noise = NoiseStream::new(cfg.base_seed, stream_id(trial, ROLE_OBSERVATION, 0));
    let mut control_filter = ParticleEnsemble::new(
        d,
        vec![cfg.control_filter_theta()],
        cfg.n_particles,
        &cfg.x0,
        NoiseStream::new(cfg.base_seed, stream_id(trial, ROLE_CONTROL_FILTER, 0)),
    );

    let mut u = match cfg.control {
        ControlMode::Constant(u) => u,
        ControlMode::Dynamic => policy.unwrap().lookup_control(&cfg.x0, 0.0),
    };
    let mut traj = Trajectory::new(0.0, cfg.dt, &cfg.x0);
    let mut x = [0.0; MAX_DIM];
    let mut next = [0.0; MAX_DIM];
    let mut eps = [0.0; MAX_DIM];
    let mut y = vec![0.0; obs.rows];
    x[..d].copy_from_slice(&cfg.x0);
    let mut observations: Vec<Vec<f64>> = Vec::with_capacity(n_steps / sub);
    let mut interval_controls: Vec<f64> = Vec::with_capacity(n_steps / sub);

    for i in 0..n_steps {
        truth.fill_normals(i as u64, &mut eps[..d]);
        euler_step(model, &x[..d], cfg.true_theta, u, cfg.dt, &eps[..d], &mut next[..d])?;
        traj.push_step(u, &next[..d]);
        x[..d].copy_from_slice(&next[..d]);

        if (i + 1) % sub == 0 {
            let obs_index = ((i + 1) / sub - 1) as u64;
            obs_noise.fill_normals(obs_index, &mut eps[..obs.rows]);
            obs.observe(&x[..d], &eps[..obs.rows], &mut y);
            control_filter.conditional_update(model, obs, &y, u, cfg.dt)?;
            observations.push(y.clone());
            interval_controls.push(u);
            if let ControlMode::Dynamic = cfg.control {
                let estimate = control_filter.mean(0);
                u = policy
                    .unwrap()
                    .lookup_control(&estimate, (i + 1) as f64 * cfg.dt);
            }
        } else {
            control_filter.propagate(model, u, cfg.dt)?;
        }
    }

    let payoff = realized_payoff(model, &traj, cfg.true_theta)?;
    let (curve, _estimates, min_spread) = crate::filter::run_filter(
        model,
        obs,
        &observations,
        cfg.prior.thetas(),
        &interval_controls,
        cfg.dt,
        cfg.n_particles,
        &cfg.x0,
        NoiseStream::new(cfg.base_seed, stream_id(trial, ROLE_ESTIMATION_FILTER, 0)),
        designated_index(&cfg.prior),
    )?;
    let mle = grid_mle(curve)?;
    let times: Vec<f64> = (0..observations.len())
        .map(|j| (j + 1) as f64 * obs.period)
        .collect();
    Ok(TrialResult {
        trial,
        estimate: mle.estimate,
        in_range: mle.in_range,
        curve: mle.curve,
        realized_payoff: payoff,
        filter_min_spread: Some(min_spread),
        trajectory: cfg.retain_paths.then_some(traj),
        observations: cfg
            .retain_paths
            .then(|| times.into_iter().zip(observations).collect()),
        interval_controls: cfg.retain_paths.then_some(interval_controls),
    })
}

/// Run all trials (in parallel) and aggregate. Individual trial failures
/// are recorded and excluded from the statistics; the batch errors if more
/// than 1% of trials fail.
pub fn run_batch(
    model: &dyn DiffusionModel,
    cfg: &ExperimentConfig,
    policy: Option<&PolicyTable>,
) -> Result<BatchResult> {
    if cfg.n_trials < 2 {
        return Err(Error::Argument("need at least two trials".into()));
    }
    let results: Vec<Result<TrialResult>> = (0..cfg.n_trials as u64)
        .into_par_iter()
        .map(|trial| run_trial(model, cfg, policy, trial))
        .collect();
    let mut trials = Vec::with_capacity(cfg.n_trials);
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => trials.push(t),
            Err(e) => failures.push((i as u64, e.to_string())),
        }
    }
    if failures.len() as f64 > 0.01 * cfg.n_trials as f64 {
        return Err(Error::Batch {
            failed: failures.len(),
            total: cfg.n_trials,
            first: failures[0].1.clone(),
        });
    }
    let estimates: Vec<f64> = trials.iter().map(|t| t.estimate).collect();
    let in_range: Vec<bool> = trials.iter().map(|t| t.in_range).collect();
    let mut stats = SummaryStats::from_estimates(&estimates, &in_range, cfg.true_theta);
    stats.n_errors = failures.len();
    Ok(BatchResult {
        stats,
        trials,
        failures,
    })
}

/// Estimate from an externally recorded observation sequence. With a policy
/// the closed-loop control decisions are reconstructed by running the
/// control filter over the observations; with a constant the value is held
/// throughout. Returns the MLE and the control value used on each
/// observation interval.
pub fn estimate_from_observations(
    model: &dyn DiffusionModel,
    cfg: &ExperimentConfig,
    policy: Option<&PolicyTable>,
    obs: &ObservationModel,
    observations: &[Vec<f64>],
) -> Result<(MleResult, Vec<f64>)> {
    let d = model.dim();
    let controls = match cfg.control {
        ControlMode::Constant(u) => vec![u; observations.len()],
        ControlMode::Dynamic => {
            let policy = policy.ok_or_else(|| {
                Error::Argument("dynamic control mode requires a policy".into())
            })?;
            let sub = obs.steps_per_observation(cfg.dt)?;
            let mut control_filter = ParticleEnsemble::new(
                d,
                vec![cfg.control_filter_theta()],
                cfg.n_particles,
                &cfg.x0,
                NoiseStream::new(cfg.base_seed, stream_id(0, ROLE_CONTROL_FILTER, 0)),
            );
            let mut u = policy.lookup_control(&cfg.x0, 0.0);
            let mut controls = Vec::with_capacity(observations.len());
            for (j, y) in observations.iter().enumerate() {
                for _ in 0..sub - 1 {
                    control_filter.propagate(model, u, cfg.dt)?;
                }
                control_filter.conditional_update(model, obs, y, u, cfg.dt)?;
                controls.push(u);
                let t = (j + 1) as f64 * obs.period;
                u = policy.lookup_control(&control_filter.mean(0), t);
            }
            controls
        }
    };
    let (curve, _, _) = crate::filter::run_filter(
        model,
        obs,
        observations,
        cfg.prior.thetas(),
        &controls,
        cfg.dt,
        cfg.n_particles,
        &cfg.x0,
        NoiseStream::new(cfg.base_seed, stream_id(0, ROLE_ESTIMATION_FILTER, 0)),
        designated_index(&cfg.prior),
    )?;
    Ok((grid_mle(curve)?, controls))
}

/// One row of a comparison table.
#[derive(Debug, Clone)]
pub struct TableRow {
    pub duration: f64,
    pub control: String,
    pub stats: SummaryStats,
}

/// Format a value with four significant digits, plain style.
pub fn sig4(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..4).contains(&mag) {
        let decimals = (3 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.3e}")
    }
}

fn pct(frac: f64) -> String {
    let p = 100.0 * frac;
    if (p - p.round()).abs() < 0.05 {
        format!("{:.0}%", p.round())
    } else {
        format!("{p:.1}%")
    }
}

/// Aligned console table of batch summaries, shaped like the experiment
/// comparison tables: one row per batch.
pub fn emit_table(rows: &[TableRow]) -> String {
    let header = [
        "Duration",
        "Control",
        "N",
        "In-range",
        "Mean",
        "Bias",
        "Std.Dev",
        "Std.Dev.Err",
    ];
    let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in rows {
        cells.push(vec![
            sig4(r.duration),
            r.control.clone(),
            r.stats.n_trials.to_string(),
            pct(r.stats.in_range_frac),
            sig4(r.stats.mean),
            sig4(r.stats.bias),
            sig4(r.stats.std_dev),
            sig4(r.stats.std_dev_err),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| cells.iter().map(|row| row[c].len()).max().unwrap())
        .collect();
    let mut out = String::new();
    for (i, row) in cells.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(v, w)| format!("{v:>w$}"))
            .collect();
        out.push_str(&line.join("  "));
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
    }
    out
}

/// Delimited form of the same table (comma separated, one header line).
pub fn emit_delimited(rows: &[TableRow]) -> String {
    let mut out =
        String::from("duration,control,n_trials,in_range_frac,mean,bias,std_dev,std_dev_err\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt_f64(r.duration),
            r.control,
            r.stats.n_trials,
            fmt_f64(r.stats.in_range_frac),
            fmt_f64(r.stats.mean),
            fmt_f64(r.stats.bias),
            fmt_f64(r.stats.std_dev),
            fmt_f64(r.stats.std_dev_err),
        ));
    }
    out
}

/// Full-precision float formatting for machine-readable files (17
/// significant digits round-trips f64 exactly).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
