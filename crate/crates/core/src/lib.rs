//! Information-maximizing control of diffusion-process experiments.
//!
//! Given a controlled stochastic differential equation with one unknown
//! parameter, this crate computes a state-feedback control policy that
//! maximizes the expected Fisher information carried by the observed
//! trajectory, by dynamic programming on a Markov-chain discretization of
//! the diffusion. It then evaluates such policies in closed-loop simulated
//! experiments: particle-filter state estimation drives the policy in real
//! time, and the unknown parameter is re-estimated afterwards by grid
//! maximum likelihood.
//!
//! Modules, bottom up:
//!
//! * [`rng`] — counter-based noise streams (reproducible, coupling-friendly)
//! * [`sde`] — model trait, Euler-Maruyama, information integrand, path
//!   likelihood
//! * [`models`] — double-well particle, Morris-Lecar neuron, chemostat,
//!   Ornstein-Uhlenbeck
//! * [`mca`] — split-operator Markov-chain discretization with validity
//!   checks
//! * [`dp`] — backward-induction policy solver over a parameter prior
//! * [`filter`] — coupled particle filters and grid maximum likelihood
//! * [`experiment`] — closed-loop trials, batches, summary tables

pub mod dp;
pub mod error;
pub mod experiment;
pub mod filter;
pub mod mca;
pub mod models;
pub mod rng;
pub mod sde;

pub use dp::{solve_policy, ControlSet, PolicyTable, PriorGrid, ValueTable};
pub use error::{Error, Result};
pub use experiment::{run_batch, run_trial, ExperimentConfig, SummaryStats, TrialResult};
pub use filter::{grid_mle, LikelihoodCurve, MleResult, ParticleEnsemble};
pub use mca::{AxisSpec, Grid, MCAConfig};
pub use models::{ChemostatParams, DoubleWellParams, MorrisLecarParams, ObservationModel, OuParams};
pub use rng::NoiseStream;
pub use sde::{euler_step, fi_integrand, path_log_likelihood, simulate_path, DiffusionModel, Trajectory};
