//! Online linear regression under a random-covariance data model.
//!
//! Each data point draws its own model:
//!
//! ```text
//! gamma ~ U([0,2]^d), s2 ~ U([0,2]), V ~ U(SO(d)), Q = V diag(gamma) V^T
//! x ~ N(0, Q), y = gamma^T x + e, e ~ N(0, s2)
//! ```
//!
//! and the loss is the squared error `(y - theta^T x)^2 / 2`. Since
//! `E[Q] = I`, the population gradient is `theta - E[Q gamma]`, with
//! `E[Q gamma]` estimated by Monte Carlo once per model.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::{Capabilities, EvalContext, Problem};
use crate::error::{invalid, Result};
use crate::linalg::{dot, norm_sq, scale};
use crate::randomness::RngStream;

pub const DEFAULT_MC_SAMPLES: usize = 1000;
pub const TEST_SET_SIZE: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct DataPoint {
    pub x: Vec<f64>,
    pub y: f64,
}

struct PointModel {
    gamma: Vec<f64>,
    noise_sd: f64,
}

fn draw_model(stream: &mut RngStream, d: usize) -> PointModel {
    let gamma = (0..d).map(|_| stream.uniform_range(0.0, 2.0)).collect();
    let noise_sd = stream.uniform_range(0.0, 2.0).sqrt();
    PointModel { gamma, noise_sd }
}

/// Draw one `(x, y)` pair with a fresh `(gamma, s2, V)`.
///
/// `V` never needs to be formed: for `w = sqrt(gamma) * z` with `z` standard
/// normal, `x = V w` is uniform on the sphere of radius `|w|` and independent
/// of `gamma` beyond that radius, so it is drawn directly as a scaled random
/// direction. [`sample_point_with_rotation`] is the literal construction.
pub fn sample_point(stream: &mut RngStream, d: usize) -> DataPoint {
    let model = draw_model(stream, d);
    let mut x: Vec<f64> = model.gamma.iter().map(|g| g.sqrt() * stream.normal()).collect();
    if d > 1 {
        let radius = norm_sq(&x).sqrt();
        stream.fill_normal(&mut x);
        let n = norm_sq(&x).sqrt();
        scale(radius / n, &mut x);
    }
    let y = dot(&model.gamma, &x) + model.noise_sd * stream.normal();
    DataPoint { x, y }
}

/// Same distribution as [`sample_point`], materializing the Haar rotation.
pub fn sample_point_with_rotation(stream: &mut RngStream, d: usize) -> Result<DataPoint> {
    let model = draw_model(stream, d);
    let w: Vec<f64> = model.gamma.iter().map(|g| g.sqrt() * stream.normal()).collect();
    let v = stream.haar_rotation(d)?;
    let x: Vec<f64> = (0..d).map(|i| (0..d).map(|j| v[(i, j)] * w[j]).sum()).collect();
    let y = dot(&model.gamma, &x) + model.noise_sd * stream.normal();
    Ok(DataPoint { x, y })
}

pub fn loss(theta: &[f64], point: &DataPoint) -> f64 {
    let r = point.y - dot(theta, &point.x);
    0.5 * r * r
}

/// Per-point gradient of the loss, `-(y - theta^T x) x`.
pub fn point_gradient(theta: &[f64], point: &DataPoint) -> Vec<f64> {
    let r = point.y - dot(theta, &point.x);
    point.x.iter().map(|xi| -r * xi).collect()
}

/// Trace of the sample covariance of the per-point gradients.
pub fn noise_trace_from_points(theta: &[f64], points: &[DataPoint]) -> Result<f64> {
    if points.len() < 2 {
        return Err(invalid("mc", "need at least two points"));
    }
    let d = theta.len();
    let mut mean = vec![0.0; d];
    let mut m2 = vec![0.0; d];
    for (n, p) in points.iter().enumerate() {
        welford_push(&mut mean, &mut m2, n + 1, &point_gradient(theta, p));
    }
    Ok(m2.iter().sum::<f64>() / (points.len() - 1) as f64)
}

fn welford_push(mean: &mut [f64], m2: &mut [f64], count: usize, x: &[f64]) {
    let inv = 1.0 / count as f64;
    for ((m, s), &v) in mean.iter_mut().zip(m2.iter_mut()).zip(x) {
        let delta = v - *m;
        *m += delta * inv;
        *s += delta * (v - *m);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinRegModel {
    d: usize,
    mc_samples: usize,
    mean_qgamma: Vec<f64>,
}

impl LinRegModel {
    /// Estimate `E[Q gamma]` from `mc_samples` explicit model draws.
    pub fn new(d: usize, mc_samples: usize, stream: &RngStream) -> Result<Self> {
        if d == 0 {
            return Err(invalid("d", "must be at least 1"));
        }
        if mc_samples == 0 {
            return Err(invalid("mc_samples", "must be at least 1"));
        }
        let mut rng = stream.clone();
        let mut acc = vec![0.0; d];
        let mut tmp = vec![0.0; d];
        for _ in 0..mc_samples {
            let gamma: Vec<f64> = (0..d).map(|_| rng.uniform_range(0.0, 2.0)).collect();
            let v = rng.haar_rotation(d)?;
            // Q gamma = V diag(gamma) V^T gamma
            for (j, t) in tmp.iter_mut().enumerate() {
                *t = gamma[j] * (0..d).map(|i| v[(i, j)] * gamma[i]).sum::<f64>();
            }
            for (i, a) in acc.iter_mut().enumerate() {
                *a += (0..d).map(|j| v[(i, j)] * tmp[j]).sum::<f64>();
            }
        }
        scale(1.0 / mc_samples as f64, &mut acc);
        Ok(Self {
            d,
            mc_samples,
            mean_qgamma: acc,
        })
    }

    /// Model with a caller-supplied `E[Q gamma]`.
    pub fn from_mean_qgamma(mean_qgamma: Vec<f64>) -> Result<Self> {
        if mean_qgamma.is_empty() {
            return Err(invalid("d", "must be at least 1"));
        }
        Ok(Self {
            d: mean_qgamma.len(),
            mc_samples: 0,
            mean_qgamma,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn mc_samples(&self) -> usize {
        self.mc_samples
    }

    pub fn mean_qgamma(&self) -> &[f64] {
        &self.mean_qgamma
    }

    pub fn sample_point(&self, stream: &mut RngStream) -> DataPoint {
        sample_point(stream, self.d)
    }

    pub fn test_set(&self, n: usize, stream: &RngStream) -> Vec<DataPoint> {
        let mut rng = stream.clone();
        (0..n).map(|_| self.sample_point(&mut rng)).collect()
    }

    /// `theta - E[Q gamma]`.
    pub fn analytic_gradient(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().zip(&self.mean_qgamma).map(|(t, m)| t - m).collect()
    }

    /// Population loss `E[(y - theta^T x)^2 / 2]`, using the stored `E[Q gamma]`
    /// for the linear term. The constant is `(E[gamma^T Q gamma] + E[s2]) / 2`
    /// with `E[gamma^T Q gamma] = 2 + 4(d - 1)/3`.
    pub fn exact_objective(&self, theta: &[f64]) -> f64 {
        let d = self.d as f64;
        let constant = 0.5 * (2.0 + 4.0 * (d - 1.0) / 3.0 + 1.0);
        0.5 * norm_sq(theta) - dot(&self.mean_qgamma, theta) + constant
    }

    /// Monte Carlo `trace(Var[grad f(theta, xi)])` over `mc` fresh points.
    pub fn noise_trace(&self, theta: &[f64], mc: usize, stream: &RngStream) -> Result<f64> {
        if mc < 2 {
            return Err(invalid("mc", "need at least two points"));
        }
        let mut rng = stream.clone();
        let mut mean = vec![0.0; self.d];
        let mut m2 = vec![0.0; self.d];
        for n in 0..mc {
            let p = self.sample_point(&mut rng);
            welford_push(&mut mean, &mut m2, n + 1, &point_gradient(theta, &p));
        }
        Ok(m2.iter().sum::<f64>() / (mc - 1) as f64)
    }

    pub fn test_loss(theta: &[f64], points: &[DataPoint]) -> f64 {
        let mut total = 0.0;
        for p in points {
            total += loss(theta, p);
        }
        total / points.len() as f64
    }
}

impl Problem for LinRegModel {
    type Sample = DataPoint;

    fn dim(&self) -> usize {
        self.d
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            noisy_eval: true,
            exact_objective: true,
            analytic_gradient: true,
        }
    }

    fn draw_sample(&self, stream: &mut RngStream) -> DataPoint {
        self.sample_point(stream)
    }

    fn evaluate(&self, theta: &[f64], sample: &DataPoint, _ctx: EvalContext<'_>) -> f64 {
        loss(theta, sample)
    }

    fn exact_value(&self, theta: &[f64]) -> Option<f64> {
        Some(self.exact_objective(theta))
    }

    fn gradient(&self, theta: &[f64]) -> Option<Vec<f64>> {
        Some(self.analytic_gradient(theta))
    }
}
