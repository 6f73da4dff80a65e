//! Command-line front end: solve information-optimal control policies,
//! run closed-loop simulated experiment batches, estimate from recorded
//! observations, and compare batch summaries.

mod config;
mod policy_file;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use config::RunConfig;
use oed_core::dp::{mean_payoff, solve_policy, PolicyTable};
use oed_core::experiment::{
    emit_delimited, emit_table, estimate_from_observations, fmt_f64, run_batch, ControlMode,
    ObservationRegime, SummaryStats, TableRow,
};
use oed_core::filter::MleResult;
use oed_core::mca::validate;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "oed",
    about = "Information-optimal input design for controlled diffusion experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print canonical config files.
    Config {
        /// Print the documented default config (all models unless --model).
        #[arg(long)]
        dump_defaults: bool,
        /// Restrict to one model.
        #[arg(long)]
        model: Option<String>,
    },
    /// Solve the optimal control policy for a config and write it to disk.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a batch of closed-loop simulated experiments.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Policy file for dynamic control (conflicts with --constant).
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Constant control value (conflicts with --policy).
        #[arg(long, allow_hyphen_values = true)]
        constant: Option<f64>,
        /// Override the trial count from the config.
        #[arg(long)]
        trials: Option<usize>,
        /// Override the base seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Per-trial results CSV; the summary goes to `<out>.summary.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the likelihood of an externally recorded observation file
    /// and report the grid MLE.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        /// CSV with header `time,y1[,y2...]`.
        #[arg(long)]
        observations: PathBuf,
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        constant: Option<f64>,
        /// Likelihood curve CSV output.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a comparison table from batch summary files.
    Report {
        /// Summary CSV files written by `simulate`.
        #[arg(long, num_args = 1.., required = true)]
        results: Vec<PathBuf>,
        /// Also write the delimited table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean information payoff per unit time as a function of the horizon.
    Payoff {
        #[arg(long)]
        config: PathBuf,
        /// Optional policy file; only checked for consistency with the
        /// config (payoff values come from fresh per-horizon solves).
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Comma-separated horizons.
        #[arg(long)]
        horizons: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the header of a policy file in human-readable form.
    Describe {
        #[arg(long)]
        policy: PathBuf,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Config { dump_defaults, model } => cmd_config(dump_defaults, model),
        Command::Solve { config, out } => cmd_solve(&config, &out),
        Command::Simulate {
            config,
            policy,
            constant,
            trials,
            seed,
            out,
        } => cmd_simulate(&config, policy.as_deref(), constant, trials, seed, &out),
        Command::Estimate {
            config,
            observations,
            policy,
            constant,
            out,
        } => cmd_estimate(&config, &observations, policy.as_deref(), constant, &out),
        Command::Report { results, out } => cmd_report(&results, out.as_deref()),
        Command::Payoff {
            config,
            policy,
            horizons,
            out,
        } => cmd_payoff(&config, policy.as_deref(), &horizons, out.as_deref()),
        Command::Describe { policy } => {
            let table = policy_file::read(&policy)?;
            print!("{}", policy_file::describe(&table));
            Ok(())
        }
    }
}

fn cmd_config(dump_defaults: bool, model: Option<String>) -> Result<()> {
    if !dump_defaults {
        bail!("nothing to do; pass --dump-defaults");
    }
    match model {
        Some(name) => print!("{}", config::default_config(&name)?),
        None => {
            for name in config::MODEL_NAMES {
                println!("# ===== {name} =====");
                print!("{}", config::default_config(name)?);
                println!();
            }
        }
    }
    Ok(())
}

fn solve_from_config(cfg: &RunConfig, horizon: f64) -> Result<(PolicyTable, oed_core::dp::ValueTable)> {
    let mca = cfg.mca_config()?;
    solve_policy(
        cfg.model.model(),
        &cfg.grid,
        &mca,
        &cfg.controls,
        &cfg.prior,
        horizon,
    )
    .map_err(|e| anyhow!("{e}"))
}

fn cmd_solve(config: &Path, out: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let mca = cfg.mca_config()?;
    let report = validate(
        cfg.model.model(),
        &cfg.grid,
        &mca,
        cfg.prior.thetas(),
        cfg.controls.values(),
    );
    print!("{report}");
    if !report.is_valid() {
        bail!(
            "discretization is unstable; raise the skip factors or shrink dt_h \
             (smallest valid per-dimension r: {:?})",
            report.dims.iter().map(|d| d.min_valid_r).collect::<Vec<_>>()
        );
    }
    let t0 = std::time::Instant::now();
    let (policy, values) = solve_from_config(&cfg, cfg.horizon)?;
    println!("solved {} steps in {:?}", policy.n_steps, t0.elapsed());
    let cell = cfg.grid.nearest_node(&cfg.x0);
    println!(
        "prior-averaged value at x0 = {:.6e}",
        values.averaged(cell)
    );
    policy_file::write(out, &policy)?;
    println!("policy written to {}", out.display());
    Ok(())
}

fn load_control(
    cfg: &RunConfig,
    policy: Option<&Path>,
    constant: Option<f64>,
) -> Result<(ControlMode, Option<PolicyTable>, String)> {
    match (policy, constant) {
        (Some(_), Some(_)) => bail!("--policy and --constant are mutually exclusive"),
        (None, None) => bail!("pass exactly one of --policy or --constant"),
        (Some(p), None) => {
            let table = policy_file::read(p)?;
            policy_file::check_matches(&table, cfg)?;
            Ok((ControlMode::Dynamic, Some(table), "dynamic".to_string()))
        }
        (None, Some(u)) => {
            if !cfg.controls.contains(u) {
                log::warn!(
                    "constant control {u} is not in the declared control set {:?}",
                    cfg.controls.values()
                );
            }
            Ok((ControlMode::Constant(u), None, format!("{u}")))
        }
    }
}

fn cmd_simulate(
    config: &Path,
    policy: Option<&Path>,
    constant: Option<f64>,
    trials: Option<usize>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let (mode, table, label) = load_control(&cfg, policy, constant)?;
    let mut exp = cfg.experiment_config(mode);
    if let Some(n) = trials {
        exp.n_trials = n;
    }
    if let Some(s) = seed {
        exp.base_seed = s;
    }
    let t0 = std::time::Instant::now();
    let batch = run_batch(cfg.model.model(), &exp, table.as_ref()).map_err(|e| anyhow!("{e}"))?;
    eprintln!(
        "{} trials in {:?} ({} failed)",
        exp.n_trials,
        t0.elapsed(),
        batch.failures.len()
    );
    for (trial, msg) in &batch.failures {
        eprintln!("trial {trial} failed: {msg}");
    }

    let mut rows = String::from("trial,estimate,in_range,realized_payoff\n");
    for t in &batch.trials {
        rows.push_str(&format!(
            "{},{},{},{}\n",
            t.trial,
            fmt_f64(t.estimate),
            t.in_range,
            fmt_f64(t.realized_payoff)
        ));
    }
    std::fs::write(out, rows).with_context(|| format!("writing {}", out.display()))?;

    let row = TableRow {
        duration: exp.horizon,
        control: label,
        stats: batch.stats.clone(),
    };
    let summary_path = summary_path(out);
    std::fs::write(&summary_path, emit_delimited(std::slice::from_ref(&row)))
        .with_context(|| format!("writing {}", summary_path.display()))?;
    print!("{}", emit_table(std::slice::from_ref(&row)));
    eprintln!(
        "trials written to {}, summary to {}",
        out.display(),
        summary_path.display()
    );
    Ok(())
}

fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    out.with_file_name(format!("{stem}.summary.csv"))
}

fn parse_observations(path: &Path, rows: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| anyhow!("{}: empty observations file", path.display()))?;
    let cols = header.split(',').count();
    if cols != rows + 1 {
        bail!(
            "{}: header `{header}` has {cols} columns, expected time plus {rows} channel(s)",
            path.display()
        );
    }
    let mut times = Vec::new();
    let mut ys = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != rows + 1 {
            bail!("{}: line {}: expected {} fields", path.display(), idx + 1, rows + 1);
        }
        let t: f64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| anyhow!("{}: line {}: bad time", path.display(), idx + 1))?;
        let mut y = Vec::with_capacity(rows);
        for f in &fields[1..] {
            y.push(f.trim().parse().map_err(|_| {
                anyhow!("{}: line {}: bad observation value", path.display(), idx + 1)
            })?);
        }
        times.push(t);
        ys.push(y);
    }
    Ok((times, ys))
}

fn cmd_estimate(
    config: &Path,
    observations: &Path,
    policy: Option<&Path>,
    constant: Option<f64>,
    out: &Path,
) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let obs_model = match &cfg.observation {
        ObservationRegime::Partial(m) => m.clone(),
        ObservationRegime::Full => bail!(
            "estimate works on recorded noisy observations; the config declares \
             full observation"
        ),
    };
    let (mode, table, _) = load_control(&cfg, policy, constant)?;
    let (times, ys) = parse_observations(observations, obs_model.rows)?;
    for (j, &t) in times.iter().enumerate() {
        let expect = (j + 1) as f64 * obs_model.period;
        if (t - expect).abs() > 1e-6 * expect.max(1.0) {
            bail!(
                "observation {j} at time {t} does not sit on the period grid \
                 (expected {expect})"
            );
        }
    }
    let exp = cfg.experiment_config(mode);
    let (mle, controls): (MleResult, Vec<f64>) =
        estimate_from_observations(cfg.model.model(), &exp, table.as_ref(), &obs_model, &ys)
            .map_err(|e| anyhow!("{e}"))?;

    let mut text = String::from("theta,log_likelihood\n");
    for (t, l) in mle.curve.thetas.iter().zip(&mle.curve.log_lik) {
        text.push_str(&format!("{},{}\n", fmt_f64(*t), fmt_f64(*l)));
    }
    std::fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    println!("estimate = {}", fmt_f64(mle.estimate));
    println!("in_range = {}", mle.in_range);
    println!(
        "controls used per interval: {}",
        controls
            .iter()
            .map(|u| format!("{u}"))
            .collect::<Vec<_>>()
            .join(",")
    );
    eprintln!("likelihood curve written to {}", out.display());
    Ok(())
}

fn cmd_report(results: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut rows = Vec::new();
    for path in results {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| anyhow!("{}: empty summary file", path.display()))?;
        if header.trim() != "duration,control,n_trials,in_range_frac,mean,bias,std_dev,std_dev_err"
        {
            bail!("{}: not a batch summary file", path.display());
        }
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                bail!("{}: malformed summary row `{line}`", path.display());
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| anyhow!("{}: bad number `{s}`", path.display()))
            };
            rows.push(TableRow {
                duration: parse(f[0])?,
                control: f[1].to_string(),
                stats: SummaryStats {
                    n_trials: f[2].parse().context("n_trials")?,
                    n_errors: 0,
                    in_range_frac: parse(f[3])?,
                    mean: parse(f[4])?,
                    bias: parse(f[5])?,
                    std_dev: parse(f[6])?,
                    std_dev_err: parse(f[7])?,
                },
            });
        }
    }
    print!("{}", emit_table(&rows));
    if let Some(path) = out {
        std::fs::write(path, emit_delimited(&rows))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_payoff(
    config: &Path,
    policy: Option<&Path>,
    horizons: &str,
    out: Option<&Path>,
) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    if let Some(p) = policy {
        let table = policy_file::read(p)?;
        policy_file::check_matches(&table, &cfg)?;
    }
    let horizons: Vec<f64> = horizons
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| anyhow!("bad horizon `{}`", s.trim()))
        })
        .collect::<Result<_>>()?;
    let cell = cfg.grid.nearest_node(&cfg.x0);
    let mut dist = vec![0.0; cfg.grid.n_cells()];
    dist[cell] = 1.0;
    let mut text = String::from("horizon,payoff,payoff_per_time\n");
    println!("{:>10}  {:>14}  {:>14}", "horizon", "payoff", "payoff/T");
    for &t in &horizons {
        let (_, values) = solve_from_config(&cfg, t)?;
        let payoff = mean_payoff(&values, &dist);
        println!("{:>10}  {:>14.6e}  {:>14.6e}", t, payoff, payoff / t);
        text.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(t),
            fmt_f64(payoff),
            fmt_f64(payoff / t)
        ));
    }
    if let Some(path) = out {
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
