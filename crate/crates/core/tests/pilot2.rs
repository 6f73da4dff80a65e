//! Scratch diagnostics for the noisy double-well estimation quality.

mod common;

use oed_core::dp::{solve_policy, ControlSet, PriorGrid};
use oed_core::experiment::{run_trial, ControlMode, ExperimentConfig, ObservationRegime};
use oed_core::mca::{AxisSpec, Grid, MCAConfig};
use oed_core::models::{DoubleWellParams, ObservationModel};

#[test]
#[ignore]
fn pilot_noisy_curves() {
    let dw = DoubleWellParams::default();
    let grid = Grid::new(vec![AxisSpec { lo: -5.0, hi: 5.0, n: 100 }]).unwrap();
    let cfg = MCAConfig::auto(&dw, &grid, 0.01).unwrap();
    let controls = ControlSet::new(vec![
        0.0, 2.0, -2.0, 4.0, -4.0, 6.0, -6.0, 8.0, -8.0, 10.0, -10.0,
    ])
    .unwrap();
    let prior = PriorGrid::uniform(2.0, 5.0, 10).unwrap();
    let (policy, _) = solve_policy(&dw, &grid, &cfg, &controls, &prior, 30.0).unwrap();
    let obs = ObservationModel::new(vec![1.0], 1, vec![0.05 * 0.05], 0.25).unwrap();
    let cfg_e = ExperimentConfig {
        true_theta: 3.84,
        prior: prior.clone(),
        control: ControlMode::Dynamic,
        regime: ObservationRegime::Partial(obs.clone()),
        dt: 0.01,
        horizon: 30.0,
        n_particles: 10_000,
        n_trials: 8,
        base_seed: 20_260_809,
        x0: vec![-1.0],
        control_theta: None,
        retain_paths: false,
    };
    for trial in 0..8u64 {
        let r = run_trial(&dw, &cfg_e, Some(&policy), trial).unwrap();
        let rel: Vec<String> = r
            .curve
            .log_lik
            .iter()
            .map(|l| format!("{:9.2}", l - r.curve.log_lik.iter().cloned().fold(f64::NEG_INFINITY, f64::max)))
            .collect();
        println!(
            "trial {trial}: est={:.4} in={} spread_min={:.4e}\n  rel loglik: {}",
            r.estimate,
            r.in_range,
            r.filter_min_spread.unwrap_or(f64::NAN),
            rel.join(" ")
        );
    }
}

#[test]
#[ignore]
fn pilot_noisy_dyn_128() {
    let dw = DoubleWellParams::default();
    let grid = Grid::new(vec![AxisSpec { lo: -5.0, hi: 5.0, n: 100 }]).unwrap();
    let cfg = MCAConfig::auto(&dw, &grid, 0.01).unwrap();
    let controls = ControlSet::new(vec![
        0.0, 2.0, -2.0, 4.0, -4.0, 6.0, -6.0, 8.0, -8.0, 10.0, -10.0,
    ])
    .unwrap();
    let prior = PriorGrid::uniform(2.0, 5.0, 10).unwrap();
    let (policy, _) = solve_policy(&dw, &grid, &cfg, &controls, &prior, 30.0).unwrap();
    let obs = ObservationModel::new(vec![1.0], 1, vec![0.05 * 0.05], 0.25).unwrap();
    let cfg_e = ExperimentConfig {
        true_theta: 3.84,
        prior: prior.clone(),
        control: ControlMode::Dynamic,
        regime: ObservationRegime::Partial(obs.clone()),
        dt: 0.01,
        horizon: 30.0,
        n_particles: 10_000,
        n_trials: 128,
        base_seed: 20_260_809,
        x0: vec![-1.0],
        control_theta: None,
        retain_paths: false,
    };
    let batch = oed_core::experiment::run_batch(&dw, &cfg_e, Some(&policy)).unwrap();
    let mut ests: Vec<f64> = batch.trials.iter().map(|t| t.estimate).collect();
    ests.sort_by(f64::total_cmp);
    println!(
        "dyn T=30 noisy 128: in_range={:.3} mean={:.4} sd={:.5}",
        batch.stats.in_range_frac, batch.stats.mean, batch.stats.std_dev
    );
    println!("quantiles: {:.4} {:.4} {:.4} {:.4} {:.4}", ests[0], ests[32], ests[64], ests[96], ests[127]);
}

use oed_core::models::MorrisLecarParams;

#[test]
#[ignore]
fn pilot_morris_lecar() {
    let ml = MorrisLecarParams::default();
    let grid = Grid::new(vec![
        AxisSpec { lo: -80.0, hi: 80.0, n: 73 },
        AxisSpec { lo: 0.0, hi: 1.0, n: 73 },
    ])
    .unwrap();
    let cfg = MCAConfig::auto(&ml, &grid, 2.0).unwrap();
    let controls = ControlSet::new(vec![0.0, 3.5, 5.0]).unwrap();
    let prior = PriorGrid::uniform(4.0, 5.0, 10).unwrap();
    let t0 = std::time::Instant::now();
    let (policy, values) = solve_policy(&ml, &grid, &cfg, &controls, &prior, 1000.0).unwrap();
    println!("ML solve T=1000 took {:?}", t0.elapsed());
    // control histogram of the t=0 slice
    let mut hist = [0usize; 3];
    for &u in policy.slice(0) {
        hist[u as usize] += 1;
    }
    println!("t=0 control histogram {hist:?}  Vavg(x0)={:.3}", values.averaged(grid.nearest_node(&[-61.0, 0.0147])));
    let obs = ObservationModel::new(vec![1.0, 0.0], 1, vec![0.25], 0.25).unwrap();
    for (label, control, regime, trials) in [
        ("full dyn", ControlMode::Dynamic, ObservationRegime::Full, 16),
        ("full 5.0", ControlMode::Constant(5.0), ObservationRegime::Full, 16),
        ("part dyn", ControlMode::Dynamic, ObservationRegime::Partial(obs.clone()), 8),
        ("part 5.0", ControlMode::Constant(5.0), ObservationRegime::Partial(obs.clone()), 8),
        ("part 0.0", ControlMode::Constant(0.0), ObservationRegime::Partial(obs.clone()), 8),
    ] {
        let cfg_e = ExperimentConfig {
            true_theta: 4.41498308,
            prior: prior.clone(),
            control,
            regime,
            dt: 0.25,
            horizon: 1000.0,
            n_particles: 500,
            n_trials: trials,
            base_seed: 20_260_809,
            x0: vec![-61.0, 0.0147],
            control_theta: None,
            retain_paths: false,
        };
        let t0 = std::time::Instant::now();
        let batch = oed_core::experiment::run_batch(&ml, &cfg_e, Some(&policy)).unwrap();
        println!(
            "{label}: {:?}/{} trials  in_range={:.3} mean={:.4} sd={:.5} payoff={:.1}",
            t0.elapsed(),
            trials,
            batch.stats.in_range_frac,
            batch.stats.mean,
            batch.stats.std_dev,
            batch.trials.iter().map(|t| t.realized_payoff).sum::<f64>() / trials as f64,
        );
    }
}

use oed_core::models::ChemostatParams;

#[test]
#[ignore]
fn pilot_chemostat() {
    let ch = ChemostatParams::default();
    let grid = Grid::new(vec![
        AxisSpec { lo: -6.0, hi: 1.0, n: 71 },
        AxisSpec { lo: -2.0, hi: 6.0, n: 81 },
    ])
    .unwrap();
    let cfg = MCAConfig::auto(&ch, &grid, 0.05).unwrap();
    println!("chemostat auto r = {:?}", cfg.r);
    let controls = ControlSet::new(vec![0.1, 0.3, 0.5, 0.68]).unwrap();
    let prior = PriorGrid::uniform(3.5, 5.5, 10).unwrap();
    let t0 = std::time::Instant::now();
    let (policy, _values) = solve_policy(&ch, &grid, &cfg, &controls, &prior, 30.0).unwrap();
    println!("chemostat solve T=30 took {:?}", t0.elapsed());
    let (stat_slice, t_stat) = policy.stationary_policy(0);
    let mut hist = [0usize; 4];
    for &u in &stat_slice {
        hist[u as usize] += 1;
    }
    println!("stationary-to t={t_stat}; stationary slice control histogram {hist:?}");
    // where does the policy use which control? print a coarse map
    for nj in (0..81).step_by(8).rev() {
        let mut row = String::new();
        for cj in (0..71).step_by(2) {
            let cell = cj * 81 + nj;
            row.push(char::from(b'0' + stat_slice[cell]));
        }
        println!("N*={:5.2}  {row}", -2.0 + 8.0 * nj as f64 / 80.0);
    }
    // payoff per T
    let cell = grid.nearest_node(&[-4.0, 2.0]);
    let mut dist = vec![0.0; grid.n_cells()];
    dist[cell] = 1.0;
    for t in [4.0, 7.0, 15.0, 30.0] {
        let (_, v) = solve_policy(&ch, &grid, &cfg, &controls, &prior, t).unwrap();
        let p = oed_core::dp::mean_payoff(&v, &dist);
        println!("T={t:5}  payoff={p:12.3}  payoff/T={:10.4}", p / t);
    }
    // full-observation batches (criterion 4 style, small pilot)
    for (label, control) in [
        ("dyn", ControlMode::Dynamic),
        ("0.1", ControlMode::Constant(0.1)),
        ("0.3", ControlMode::Constant(0.3)),
        ("0.68", ControlMode::Constant(0.68)),
    ] {
        for horizon in [7.0, 30.0] {
            let cfg_e = ExperimentConfig {
                true_theta: 4.4,
                prior: prior.clone(),
                control: control.clone(),
                regime: ObservationRegime::Full,
                dt: 0.01,
                horizon,
                n_particles: 1000,
                n_trials: 64,
                base_seed: 20_260_809,
                x0: vec![-4.0, 2.0],
                control_theta: None,
                retain_paths: false,
            };
            let batch = oed_core::experiment::run_batch(&ch, &cfg_e, Some(&policy)).unwrap();
            println!(
                "chem full T={horizon:4} {label:4}: in_range={:.3} mean={:.4} sd={:.5}",
                batch.stats.in_range_frac, batch.stats.mean, batch.stats.std_dev
            );
        }
    }
}
