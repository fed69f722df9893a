//! Classical minimization benchmarks with additive Gaussian evaluation noise.

use core::fmt;
use core::str::FromStr;

#[allow(unused_imports)]
use num_traits::Float;

use super::{Capabilities, EvalContext, Problem};
use crate::error::{invalid, Error, Result};
use crate::randomness::RngStream;

pub const DEFAULT_NOISE_LEVEL: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DfoFunction {
    Sphere,
    Rosenbrock,
    Cigar,
    Hm,
}

impl DfoFunction {
    pub const ALL: [DfoFunction; 4] = [
        DfoFunction::Sphere,
        DfoFunction::Rosenbrock,
        DfoFunction::Cigar,
        DfoFunction::Hm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DfoFunction::Sphere => "sphere",
            DfoFunction::Rosenbrock => "rosenbrock",
            DfoFunction::Cigar => "cigar",
            DfoFunction::Hm => "hm",
        }
    }

    pub fn value(self, theta: &[f64]) -> f64 {
        match self {
            DfoFunction::Sphere => theta.iter().map(|t| t * t).sum(),
            DfoFunction::Rosenbrock => theta
                .windows(2)
                .map(|w| {
                    let a = w[1] - w[0] * w[0];
                    let b = w[0] - 1.0;
                    100.0 * a * a + b * b
                })
                .sum(),
            DfoFunction::Cigar => match theta.split_first() {
                Some((first, rest)) => first * first + 1e6 * rest.iter().map(|t| t * t).sum::<f64>(),
                None => 0.0,
            },
            // cos(1/t) is undefined at 0; the t^2 factor squeezes the term to 0 there.
            DfoFunction::Hm => theta
                .iter()
                .map(|&t| if t == 0.0 { 0.0 } else { t * t * (1.1 + (1.0 / t).cos()) })
                .sum(),
        }
    }
}

impl fmt::Display for DfoFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DfoFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DfoFunction::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| invalid("obj", alloc::format!("unknown objective `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DfoObjective {
    pub function: DfoFunction,
    pub d: usize,
    pub noise_level: f64,
}

impl DfoObjective {
    pub fn new(function: DfoFunction, d: usize, noise_level: f64) -> Result<Self> {
        if d == 0 {
            return Err(invalid("d", "must be at least 1"));
        }
        if !(noise_level >= 0.0 && noise_level.is_finite()) {
            return Err(invalid("noise_level", "must be finite and non-negative"));
        }
        Ok(Self {
            function,
            d,
            noise_level,
        })
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        self.function.value(theta)
    }

    pub fn noisy_eval(&self, theta: &[f64], stream: &mut RngStream) -> f64 {
        let v = self.value(theta);
        if self.noise_level == 0.0 {
            v
        } else {
            v + self.noise_level * stream.normal()
        }
    }
}

impl Problem for DfoObjective {
    type Sample = ();

    fn dim(&self) -> usize {
        self.d
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            noisy_eval: true,
            exact_objective: true,
            analytic_gradient: false,
        }
    }

    fn draw_sample(&self, _stream: &mut RngStream) {}

    fn evaluate(&self, theta: &[f64], _sample: &(), ctx: EvalContext<'_>) -> f64 {
        if self.noise_level == 0.0 {
            self.value(theta)
        } else {
            self.noisy_eval(theta, &mut ctx.stream())
        }
    }

    fn exact_value(&self, theta: &[f64]) -> Option<f64> {
        Some(self.value(theta))
    }
}
