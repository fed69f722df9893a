use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A closed-form quantity was requested outside the parameter range where it is defined.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("{0} is not supported here")]
    Unsupported(&'static str),

    /// Gram-Schmidt met a row (numerically) in the span of its predecessors.
    #[error("direction {row} is rank deficient (residual norm {residual:e})")]
    RankDeficient { row: usize, residual: f64 },

    #[error("non-finite objective value at {point:?}")]
    Evaluation { point: Vec<f64> },

    #[error("parameters diverged in round {round}, iteration {iteration}")]
    Divergence { round: usize, iteration: usize },

    #[error("grid search failed: every cell diverged ({})", cells.join(", "))]
    GridSearch { cells: Vec<String> },

    #[error("selection seed {0} is also an evaluation seed")]
    SeedOverlap(u64),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
