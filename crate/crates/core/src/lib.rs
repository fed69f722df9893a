//! Zeroth-order gradient estimation with generalized smoothing distributions.
//!
//! Perturbation families (Gaussian, Bernoulli, their variance-shrunk
//! versions, orthogonal and guided ES), forward-difference and antithetic
//! estimators, closed-form MSE formulas, benchmark problems and an SGD
//! experiment loop. `no_std` with `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod estimators;
pub mod linalg;
pub mod optimizer;
pub mod problems;
pub mod randomness;
pub mod samplers;
pub mod theory;

pub use error::{Error, Result};
pub use estimators::{EstimatorConfig, EstimatorKind, GradientEstimate};
pub use optimizer::{Direction, ProblemSpec, RunConfig, RunRecord};
pub use problems::{DfoFunction, DfoObjective, LinRegModel, Problem};
pub use randomness::RngStream;
pub use samplers::{DirectionSet, SamplerKind, SamplerSpec};
