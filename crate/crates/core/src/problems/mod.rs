//! Black-box objectives the estimators query.

use alloc::vec::Vec;

use crate::randomness::RngStream;

pub mod dfo;
pub mod linreg;

pub use dfo::{DfoFunction, DfoObjective};
pub use linreg::{DataPoint, LinRegModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Capabilities {
    pub noisy_eval: bool,
    pub exact_objective: bool,
    pub analytic_gradient: bool,
}

/// Identifies one objective call so a problem with call-local noise can
/// derive a stream that does not depend on evaluation order.
#[derive(Clone, Copy, Debug)]
pub struct EvalContext<'a> {
    root: &'a RngStream,
    labels: [u64; 3],
}

impl<'a> EvalContext<'a> {
    pub fn new(root: &'a RngStream, labels: [u64; 3]) -> Self {
        Self { root, labels }
    }

    pub fn stream(&self) -> RngStream {
        let [a, b, c] = self.labels;
        self.root.derive(a).derive(b).derive(c)
    }
}

/// A stochastic objective `f(theta, xi)` with `E_xi f(theta, xi) = F(theta)`.
///
/// `Sample` is the shared random context `xi` (a data point, or nothing);
/// problems whose noise is independent per call draw it from the
/// [`EvalContext`] instead.
pub trait Problem {
    type Sample;

    fn dim(&self) -> usize;

    fn capabilities(&self) -> Capabilities;

    fn draw_sample(&self, stream: &mut RngStream) -> Self::Sample;

    fn evaluate(&self, theta: &[f64], sample: &Self::Sample, ctx: EvalContext<'_>) -> f64;

    fn exact_value(&self, _theta: &[f64]) -> Option<f64> {
        None
    }

    fn gradient(&self, _theta: &[f64]) -> Option<Vec<f64>> {
        None
    }
}
