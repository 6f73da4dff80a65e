//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A state became non-finite during integration.
    #[error("numeric overflow: {context}")]
    NumericOverflow { context: String },

    /// A diffusion entry vanished where a division by it was required.
    #[error("zero diffusion entry in dimension {dim}")]
    ZeroDiffusion { dim: usize },

    /// A transition probability left [0, 1]; the time step and skip
    /// factors do not satisfy the stability constraint at this node.
    #[error("stability violation at node {node:?}, dimension {dim}: side probability {prob}")]
    Stability {
        node: Vec<usize>,
        dim: usize,
        prob: f64,
    },

    /// Dilution at or above the wash-out rate: the chemostat has no
    /// finite fixed point.
    #[error("no fixed point: dilution {delta} is not admissible (chi*rho = {chi_rho})")]
    NoFixedPoint { delta: f64, chi_rho: f64 },

    /// A function was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Innovation covariance in a conditional update was not positive
    /// definite.
    #[error("singular innovation covariance: {0}")]
    SingularInnovation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("trial {trial} failed: {source}")]
    Trial {
        trial: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("batch failed: {failed} of {total} trials errored (first: {first})")]
    Batch {
        failed: usize,
        total: usize,
        first: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
