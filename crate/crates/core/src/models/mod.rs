//! Concrete diffusion models: double-well particle, Morris-Lecar neuron,
//! chemostat, and an Ornstein-Uhlenbeck validation system, plus the linear
//! Gaussian observation model shared by all of them.

mod chemostat;
mod double_well;
mod morris_lecar;
mod observation;
mod ou;

pub use chemostat::{chemostat_fixed_point, ChemostatParams};
pub use double_well::{double_well_drift, double_well_potential, DoubleWellParams};
pub use morris_lecar::{ml_aux, ml_gamma, MorrisLecarParams};
pub use observation::ObservationModel;
pub use ou::OuParams;
