//! Zeroth-order gradient estimators.
//!
//! Forward difference:
//!
//! ```text
//! g = 1/(c L N) sum_{l,i} (f(theta + c e_l, xi_i) - f(theta, xi_i)) e_l
//! ```
//!
//! Antithetic:
//!
//! ```text
//! g = 1/(2 c L N) sum_{l,i} (f(theta + c e_l, xi_i) - f(theta - c e_l, xi_i)) e_l
//! ```
//!
//! The `N` random contexts `xi_i` are shared by every evaluation in one
//! estimate, and the forward-difference baseline `f(theta, xi_i)` is
//! evaluated once per context and reused across all directions.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::linalg::{all_finite, axpy, dist_sq};
use crate::problems::{EvalContext, Problem};
use crate::randomness::RngStream;
use crate::samplers::{sample_directions, DirectionSet, SamplerSpec};
use crate::theory::MseDecomposition;

/// Lower clamp on the reward standard deviation used for standardization.
pub const MIN_REWARD_STD: f64 = 1e-8;

// Substream labels within one estimate.
const DATA: u64 = 0;
const BASE: u64 = 1;
const PLUS: u64 = 2;
const MINUS: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    SingleGs,
    ForwardDifference,
    Antithetic,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::SingleGs => "gs-single",
            EstimatorKind::ForwardDifference => "fd",
            EstimatorKind::Antithetic => "at",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fd" => Ok(EstimatorKind::ForwardDifference),
            "at" => Ok(EstimatorKind::Antithetic),
            "gs-single" => Ok(EstimatorKind::SingleGs),
            _ => Err(invalid("estimator", alloc::format!("unknown estimator `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    /// Smoothing spacing.
    pub c: f64,
    /// Directions per estimate.
    pub l: usize,
    /// Random evaluations per point.
    pub n: usize,
    pub standardize_rewards: bool,
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind, c: f64, l: usize, n: usize) -> Result<Self> {
        let cfg = Self {
            kind,
            c,
            l,
            n,
            standardize_rewards: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn standardized(mut self, on: bool) -> Self {
        self.standardize_rewards = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid("c", "must be positive and finite"));
        }
        if self.l == 0 {
            return Err(invalid("L", "must be at least 1"));
        }
        if self.n == 0 {
            return Err(invalid("N", "must be at least 1"));
        }
        Ok(())
    }

    /// Objective calls made by one estimate.
    pub fn evaluations_per_estimate(&self) -> u64 {
        let (l, n) = (self.l as u64, self.n as u64);
        match self.kind {
            EstimatorKind::SingleGs => 1,
            EstimatorKind::ForwardDifference => l * n + n,
            EstimatorKind::Antithetic => 2 * l * n,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    pub vector: Vec<f64>,
    pub config: EstimatorConfig,
    pub evaluations_used: u64,
    /// Reward standardization hit the lower clamp on the standard deviation.
    pub std_clamped: bool,
}

fn checked_eval<P: Problem>(
    problem: &P,
    point: &[f64],
    sample: &P::Sample,
    ctx: EvalContext<'_>,
) -> Result<f64> {
    let v = problem.evaluate(point, sample, ctx);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation {
            point: point.to_vec(),
        })
    }
}

fn shifted(theta: &[f64], c: f64, dir: &[f64]) -> Vec<f64> {
    let mut p = theta.to_vec();
    axpy(c, dir, &mut p);
    p
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

fn check_shapes<P: Problem>(
    problem: &P,
    theta: &[f64],
    cfg: &EstimatorConfig,
    dirs: &DirectionSet,
) -> Result<()> {
    cfg.validate()?;
    if theta.len() != problem.dim() || dirs.dim() != problem.dim() {
        return Err(invalid("theta", "dimension does not match the problem"));
    }
    if dirs.len() != cfg.l {
        return Err(invalid("directions", "row count must equal L"));
    }
    Ok(())
}

/// One-direction Gaussian smoothing estimate `F^(theta + c e) e / c`.
pub fn estimate_gs_single<P: Problem>(
    problem: &P,
    theta: &[f64],
    c: f64,
    stream: &RngStream,
) -> Result<GradientEstimate> {
    let dir = stream.derive(0).standard_normal(problem.dim());
    estimate_gs_single_along(problem, theta, c, &dir, stream)
}

/// [`estimate_gs_single`] along a caller-chosen direction.
pub fn estimate_gs_single_along<P: Problem>(
    problem: &P,
    theta: &[f64],
    c: f64,
    dir: &[f64],
    stream: &RngStream,
) -> Result<GradientEstimate> {
    let config = EstimatorConfig::new(EstimatorKind::SingleGs, c, 1, 1)?;
    if theta.len() != problem.dim() || dir.len() != problem.dim() {
        return Err(invalid("theta", "dimension does not match the problem"));
    }
    let sample = problem.draw_sample(&mut stream.derive(1));
    let eval_root = stream.derive(2);
    let value = checked_eval(
        problem,
        &shifted(theta, c, dir),
        &sample,
        EvalContext::new(&eval_root, [PLUS, 0, 0]),
    )?;
    Ok(GradientEstimate {
        vector: dir.iter().map(|e| value * e / c).collect(),
        config,
        evaluations_used: 1,
        std_clamped: false,
    })
}

/// Forward-difference estimate over the given directions.
pub fn estimate_fd<P: Problem>(
    problem: &P,
    theta: &[f64],
    cfg: &EstimatorConfig,
    dirs: &DirectionSet,
    stream: &RngStream,
) -> Result<GradientEstimate> {
    if cfg.kind != EstimatorKind::ForwardDifference {
        return Err(invalid("estimator", "estimate_fd needs a forward-difference config"));
    }
    check_shapes(problem, theta, cfg, dirs)?;
    let (l, n) = (cfg.l, cfg.n);
    let samples: Vec<P::Sample> = (0..n)
        .map(|i| problem.draw_sample(&mut stream.derive(DATA).derive(i as u64)))
        .collect();

    let mut baseline = Vec::with_capacity(n);
    for (i, s) in samples.iter().enumerate() {
        baseline.push(checked_eval(problem, theta, s, EvalContext::new(stream, [BASE, 0, i as u64]))?);
    }
    // diffs[l * n + i] = f(theta + c e_l, xi_i) - f(theta, xi_i)
    let mut perturbed = Vec::with_capacity(l * n);
    for (li, dir) in dirs.rows().enumerate() {
        let point = shifted(theta, cfg.c, dir);
        for (i, s) in samples.iter().enumerate() {
            perturbed.push(checked_eval(
                problem,
                &point,
                s,
                EvalContext::new(stream, [PLUS, li as u64, i as u64]),
            )?);
        }
    }
    let diffs: Vec<f64> = perturbed
        .iter()
        .enumerate()
        .map(|(k, p)| p - baseline[k % n])
        .collect();

    let mut pool = perturbed;
    pool.extend_from_slice(&baseline);
    aggregate(theta.len(), cfg, dirs, &diffs, &pool, cfg.c * (l * n) as f64)
}

/// Antithetic estimate over the given directions.
pub fn estimate_at<P: Problem>(
    problem: &P,
    theta: &[f64],
    cfg: &EstimatorConfig,
    dirs: &DirectionSet,
    stream: &RngStream,
) -> Result<GradientEstimate> {
    if cfg.kind != EstimatorKind::Antithetic {
        return Err(invalid("estimator", "estimate_at needs an antithetic config"));
    }
    check_shapes(problem, theta, cfg, dirs)?;
    let (l, n) = (cfg.l, cfg.n);
    let samples: Vec<P::Sample> = (0..n)
        .map(|i| problem.draw_sample(&mut stream.derive(DATA).derive(i as u64)))
        .collect();

    let mut pool = Vec::with_capacity(2 * l * n);
    let mut diffs = Vec::with_capacity(l * n);
    for (li, dir) in dirs.rows().enumerate() {
        let plus = shifted(theta, cfg.c, dir);
        let minus = shifted(theta, -cfg.c, dir);
        for (i, s) in samples.iter().enumerate() {
            let key = [li as u64, i as u64];
            let fp = checked_eval(problem, &plus, s, EvalContext::new(stream, [PLUS, key[0], key[1]]))?;
            let fm = checked_eval(problem, &minus, s, EvalContext::new(stream, [MINUS, key[0], key[1]]))?;
            pool.push(fp);
            pool.push(fm);
            diffs.push(fp - fm);
        }
    }
    aggregate(theta.len(), cfg, dirs, &diffs, &pool, 2.0 * cfg.c * (l * n) as f64)
}

/// `sum_l e_l * (sum_i diffs[l, i]) / (denominator * std)` in index order.
fn aggregate(
    d: usize,
    cfg: &EstimatorConfig,
    dirs: &DirectionSet,
    diffs: &[f64],
    pool: &[f64],
    denominator: f64,
) -> Result<GradientEstimate> {
    let (mut divisor, mut std_clamped) = (denominator, false);
    if cfg.standardize_rewards {
        let sd = population_std(pool);
        if sd < MIN_REWARD_STD {
            std_clamped = true;
        }
        divisor *= sd.max(MIN_REWARD_STD);
    }
    let mut vector = vec![0.0; d];
    for (li, dir) in dirs.rows().enumerate() {
        let weight: f64 = diffs[li * cfg.n..(li + 1) * cfg.n].iter().sum();
        axpy(weight / divisor, dir, &mut vector);
    }
    Ok(GradientEstimate {
        vector,
        config: *cfg,
        evaluations_used: pool.len() as u64,
        std_clamped,
    })
}

/// Forward-difference or antithetic estimate, by `cfg.kind`.
pub fn estimate<P: Problem>(
    problem: &P,
    theta: &[f64],
    cfg: &EstimatorConfig,
    dirs: &DirectionSet,
    stream: &RngStream,
) -> Result<GradientEstimate> {
    match cfg.kind {
        EstimatorKind::ForwardDifference => estimate_fd(problem, theta, cfg, dirs, stream),
        EstimatorKind::Antithetic => estimate_at(problem, theta, cfg, dirs, stream),
        EstimatorKind::SingleGs => Err(Error::Unsupported(
            "single-direction GS over a direction set",
        )),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmpiricalMse {
    pub decomposition: MseDecomposition,
    pub replications: usize,
    /// Monte Carlo standard error of `decomposition.total`.
    pub total_std_error: f64,
}

/// Monte Carlo MSE of the estimator at a fixed `theta` against the analytic
/// gradient, from `replications` independent estimates with fresh directions
/// and noise.
///
/// The split uses the `1/R` sample covariance so that
/// `total = squared_bias + trace_variance` equals the mean squared error.
pub fn empirical_mse<P: Problem>(
    problem: &P,
    theta: &[f64],
    cfg: &EstimatorConfig,
    spec: &SamplerSpec,
    replications: usize,
    stream: &RngStream,
) -> Result<EmpiricalMse> {
    if replications < 2 {
        return Err(invalid("replications", "need at least two"));
    }
    let truth = problem
        .gradient(theta)
        .ok_or(Error::Unsupported("empirical MSE without an analytic gradient"))?;
    let d = theta.len();
    let mut mean = vec![0.0; d];
    let mut m2 = vec![0.0; d];
    let (mut sq_sum, mut sq_sq_sum) = (0.0, 0.0);
    for r in 0..replications {
        let rep = stream.derive(r as u64);
        let dirs = sample_directions(spec, cfg.l, d, &rep.derive(0))?;
        let g = estimate(problem, theta, cfg, &dirs, &rep.derive(1))?;
        let inv = 1.0 / (r + 1) as f64;
        for ((m, s), &v) in mean.iter_mut().zip(m2.iter_mut()).zip(&g.vector) {
            let delta = v - *m;
            *m += delta * inv;
            *s += delta * (v - *m);
        }
        let e = dist_sq(&g.vector, &truth);
        sq_sum += e;
        sq_sq_sum += e * e;
    }
    let rf = replications as f64;
    let squared_bias = dist_sq(&mean, &truth);
    let trace_variance = m2.iter().sum::<f64>() / rf;
    let mean_sq = sq_sum / rf;
    let var_sq = (sq_sq_sum / rf - mean_sq * mean_sq).max(0.0) * rf / (rf - 1.0);
    Ok(EmpiricalMse {
        decomposition: MseDecomposition {
            squared_bias,
            trace_variance,
            total: squared_bias + trace_variance,
            terms: None,
        },
        replications,
        total_std_error: (var_sq / rf).sqrt(),
    })
}

/// Whether every entry of an estimate is finite.
pub fn is_finite(estimate: &GradientEstimate) -> bool {
    all_finite(&estimate.vector)
}
