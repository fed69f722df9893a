//! Closed-form oracle for the forward-difference estimator in the `c -> 0`
//! limit: entry moments, MSE and bias, shrinkage objectives, the GS-shrinkage
//! vs BeS-shrinkage gap and the biased-SGD convergence bound.
//!
//! Everything here assumes direction entries are IID with zero mean.

use alloc::format;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::samplers::{SamplerKind, SamplerSpec};

/// Variance and kurtosis of a single direction entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub variance: f64,
    pub kurtosis: f64,
}

impl Moments {
    pub const GAUSSIAN: Moments = Moments {
        variance: 1.0,
        kurtosis: 3.0,
    };
    pub const RADEMACHER: Moments = Moments {
        variance: 1.0,
        kurtosis: 1.0,
    };

    /// Moments of `(B_p - p) / m`.
    pub fn bernoulli(p: f64, m: f64) -> Moments {
        let q = p * (1.0 - p);
        Moments {
            variance: q / (m * m),
            kurtosis: 3.0 + (1.0 - 6.0 * q) / q,
        }
    }
}

/// The two parts of the MSE formula: the gradient-driven term and the
/// evaluation-noise term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MseTerms {
    pub gradient: f64,
    pub noise: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MseDecomposition {
    pub squared_bias: f64,
    pub trace_variance: f64,
    pub total: f64,
    /// Present for closed-form decompositions only.
    pub terms: Option<MseTerms>,
}

impl MseDecomposition {
    pub const ZERO: MseDecomposition = MseDecomposition {
        squared_bias: 0.0,
        trace_variance: 0.0,
        total: 0.0,
        terms: None,
    };
}

/// `||grad F(theta)||^2` and `trace(Var_xi[grad f(theta, xi)])` at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProblemStatistics {
    pub grad_norm_sq: f64,
    pub noise_trace: f64,
}

impl ProblemStatistics {
    pub fn new(grad_norm_sq: f64, noise_trace: f64) -> Result<Self> {
        if !(grad_norm_sq >= 0.0 && grad_norm_sq.is_finite()) {
            return Err(invalid("grad_norm_sq", "must be finite and non-negative"));
        }
        if !(noise_trace >= 0.0 && noise_trace.is_finite()) {
            return Err(invalid("noise_trace", "must be finite and non-negative"));
        }
        Ok(Self {
            grad_norm_sq,
            noise_trace,
        })
    }
}

pub fn distribution_moments(spec: &SamplerSpec) -> Result<Moments> {
    match spec.kind {
        SamplerKind::Gs | SamplerKind::GsShrinkage => Ok(Moments {
            variance: spec.gaussian_variance,
            kurtosis: 3.0,
        }),
        SamplerKind::Bes | SamplerKind::BesShrinkage => {
            Ok(Moments::bernoulli(spec.bernoulli_p, spec.bernoulli_scale))
        }
        SamplerKind::OrthogonalEs => Err(Error::Unsupported("closed-form moments for orthogonal ES")),
        SamplerKind::GuidedEs => Err(Error::Unsupported("closed-form moments for guided ES")),
    }
}

fn check_sizes(l: usize, n: usize, d: usize) -> Result<()> {
    if l == 0 {
        return Err(invalid("L", "must be at least 1"));
    }
    if n == 0 {
        return Err(invalid("N", "must be at least 1"));
    }
    if d == 0 {
        return Err(invalid("d", "must be at least 1"));
    }
    Ok(())
}

/// Asymptotic MSE of the forward-difference estimator:
///
/// ```text
/// ((s2 - 1)^2 + s2^2 (d + k - 2) / L) ||grad F||^2
///   + s2^2 (d + k - 1) / (L N) trace(Var[grad f])
/// ```
///
/// with bias `(s2 - 1) grad F`.
pub fn fd_mse_closed_form(
    moments: Moments,
    l: usize,
    n: usize,
    d: usize,
    stats: ProblemStatistics,
) -> Result<MseDecomposition> {
    check_sizes(l, n, d)?;
    let s2 = moments.variance;
    let s4 = s2 * s2;
    let k = moments.kurtosis;
    let (lf, nf, df) = (l as f64, n as f64, d as f64);
    let bias_factor = (s2 - 1.0) * (s2 - 1.0);
    let gradient = (bias_factor + s4 / lf * (df + k - 2.0)) * stats.grad_norm_sq;
    let noise = s4 / (lf * nf) * (df + k - 1.0) * stats.noise_trace;
    let total = gradient + noise;
    let squared_bias = bias_factor * stats.grad_norm_sq;
    Ok(MseDecomposition {
        squared_bias,
        trace_variance: total - squared_bias,
        total,
        terms: Some(MseTerms { gradient, noise }),
    })
}

/// Gradient part of the Gaussian MSE as a function of the entry variance.
pub fn gs_shrinkage_objective(variance: f64, l: usize, d: usize) -> f64 {
    let s2 = variance;
    (s2 - 1.0) * (s2 - 1.0) + s2 * s2 / l as f64 * (d as f64 + 1.0)
}

/// Gradient part of the Bernoulli MSE as a function of `(p, m)`.
pub fn bes_shrinkage_objective(p: f64, m: f64, l: usize, d: usize) -> f64 {
    let q = p * (1.0 - p);
    let m2 = m * m;
    let v = q / m2 - 1.0;
    v * v + q * q / (l as f64 * m2 * m2) * (d as f64 + 1.0 + (1.0 - 6.0 * q) / q)
}

/// `MSE(GS-shrinkage) - MSE(BeS-shrinkage)`; positive when BeS-shrinkage
/// has the smaller closed-form MSE.
pub fn mse_gap_gss_vs_bess(l: usize, n: usize, d: usize, stats: ProblemStatistics) -> Result<f64> {
    check_sizes(l, n, d)?;
    if l + d <= 5 {
        return Err(Error::Hypothesis(format!(
            "Bernoulli shrinkage needs L + d > 5, got L={l}, d={d}"
        )));
    }
    let (lf, nf, df) = (l as f64, n as f64, d as f64);
    let lo = lf + df - 1.0;
    let hi = lf + df + 1.0;
    let noise_coef = (lf * lf - 2.0 * lf + 2.0 - (df + 1.0) * (df + 1.0)) / (nf * lo * hi);
    Ok(2.0 * lf / (lo * hi) * (stats.grad_norm_sq + noise_coef * stats.noise_trace))
}

/// Bound on the average squared gradient norm of biased SGD,
/// `(M + 4 Delta mu) / ((1 - 2B) sqrt(T))`, valid for `B < 0.5`.
pub fn convergence_bound(mse: f64, bias: f64, delta: f64, mu: f64, steps: u64) -> Result<f64> {
    if mse.is_nan() || mse < 0.0 {
        return Err(invalid("M", "must be non-negative"));
    }
    if bias.is_nan() || bias < 0.0 {
        return Err(invalid("B", "must be non-negative"));
    }
    if delta.is_nan() || delta < 0.0 {
        return Err(invalid("delta", "must be non-negative"));
    }
    if mu.is_nan() || mu <= 0.0 {
        return Err(invalid("mu", "must be positive"));
    }
    if steps == 0 {
        return Err(invalid("T", "must be at least 1"));
    }
    if bias >= 0.5 {
        return Err(Error::Hypothesis(format!(
            "the bound requires B < 0.5, got B={bias}"
        )));
    }
    Ok((mse + 4.0 * delta * mu) / ((1.0 - 2.0 * bias) * (steps as f64).sqrt()))
}

/// `trace(E[e e^T A e e^T]) = s2^2 (d + k - 1) trace(A)` for IID zero-mean entries.
/// `a` is a row-major `d x d` matrix.
pub fn trace_quartic_closed_form(moments: Moments, d: usize, a: &[f64]) -> Result<f64> {
    if a.len() != d * d {
        return Err(invalid("A", "must be a square matrix of size d"));
    }
    let trace: f64 = (0..d).map(|i| a[i * d + i]).sum();
    let s2 = moments.variance;
    Ok(s2 * s2 * (d as f64 + moments.kurtosis - 1.0) * trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::bes_shrinkage_scale;
    use approx::assert_relative_eq;

    fn stats(g: f64, t: f64) -> ProblemStatistics {
        ProblemStatistics::new(g, t).unwrap()
    }

    #[test]
    fn moments_per_family() {
        let m = |k, l, d| distribution_moments(&SamplerSpec::new(k, l, d).unwrap()).unwrap();
        assert_eq!(m(SamplerKind::Gs, 2, 100), Moments::GAUSSIAN);
        assert_eq!(m(SamplerKind::Bes, 2, 100), Moments::RADEMACHER);
        let gss = m(SamplerKind::GsShrinkage, 2, 100);
        assert_relative_eq!(gss.variance, 2.0 / 103.0);
        assert_eq!(gss.kurtosis, 3.0);
        let bess = m(SamplerKind::BesShrinkage, 2, 100);
        assert_relative_eq!(bess.variance, 2.0 / 101.0, max_relative = 1e-14);
        assert_relative_eq!(bess.kurtosis, 1.0, epsilon = 1e-14);
        for k in [SamplerKind::OrthogonalEs, SamplerKind::GuidedEs] {
            let spec = SamplerSpec::new(k, 2, 100).unwrap();
            assert!(matches!(distribution_moments(&spec), Err(Error::Unsupported(_))));
        }
    }

    #[test]
    fn bernoulli_kurtosis_matches_formula() {
        // p = 0.5 gives the minimum kurtosis 1; skewed coins are heavier tailed.
        assert_relative_eq!(Moments::bernoulli(0.5, 0.5).kurtosis, 1.0);
        assert!(Moments::bernoulli(0.1, 1.0).kurtosis > 1.0);
    }

    #[test]
    fn fd_mse_reference_values() {
        let gs = fd_mse_closed_form(Moments::GAUSSIAN, 2, 5, 100, stats(1.0, 0.0)).unwrap();
        assert_relative_eq!(gs.total, 50.5);
        assert_eq!(gs.squared_bias, 0.0);
        let bes = fd_mse_closed_form(Moments::RADEMACHER, 2, 5, 100, stats(1.0, 0.0)).unwrap();
        assert_relative_eq!(bes.total, 49.5);
        let zero = fd_mse_closed_form(Moments::bernoulli(0.3, 2.0), 3, 1, 7, stats(0.0, 0.0)).unwrap();
        assert_eq!((zero.total, zero.squared_bias, zero.trace_variance), (0.0, 0.0, 0.0));

        // GS: (d+1)/L ||g||^2 + (d+2)/(LN) tr
        let mixed = fd_mse_closed_form(Moments::GAUSSIAN, 6, 15, 100, stats(3.0, 7.0)).unwrap();
        assert_relative_eq!(mixed.total, 101.0 / 6.0 * 3.0 + 102.0 / 90.0 * 7.0, max_relative = 1e-14);
        let terms = mixed.terms.unwrap();
        assert_relative_eq!(mixed.total, terms.gradient + terms.noise);
        assert_relative_eq!(mixed.total, mixed.squared_bias + mixed.trace_variance);
    }

    #[test]
    fn fd_mse_bias_term() {
        let m = Moments {
            variance: 0.25,
            kurtosis: 3.0,
        };
        let dec = fd_mse_closed_form(m, 2, 5, 10, stats(4.0, 1.0)).unwrap();
        assert_relative_eq!(dec.squared_bias, 0.5625 * 4.0);
    }

    #[test]
    fn gs_objective_values() {
        assert_relative_eq!(gs_shrinkage_objective(1.0, 2, 100), 50.5);
        assert!((gs_shrinkage_objective(1e-12, 2, 100) - 1.0).abs() < 1e-9);
        for l in 1..=200 {
            for d in (1..=200).step_by(7) {
                let opt = gs_shrinkage_variance_local(l, d);
                assert!(gs_shrinkage_objective(opt, l, d) < gs_shrinkage_objective(1.0, l, d));
            }
        }
    }

    fn gs_shrinkage_variance_local(l: usize, d: usize) -> f64 {
        crate::samplers::gs_shrinkage_variance(l, d)
    }

    #[test]
    fn bes_objective_values() {
        assert_relative_eq!(bes_shrinkage_objective(0.5, 0.5, 2, 100), 49.5);
        // At p = 0.5 the objective reduces to Q(y) = 1 - 1/(2y) + (L+d-1)/(16 y^2 L), y = m^2.
        let (l, d) = (1usize, 5usize);
        let m = bes_shrinkage_scale(l, d).unwrap();
        let y = m * m;
        assert_relative_eq!(y, 1.25, max_relative = 1e-14);
        let q = 1.0 - 1.0 / (2.0 * y) + (l + d - 1) as f64 / (16.0 * y * y * l as f64);
        assert_relative_eq!(bes_shrinkage_objective(0.5, m, l, d), q, max_relative = 1e-14);
    }

    #[test]
    fn gap_reference_values() {
        let g = mse_gap_gss_vs_bess(2, 5, 100, stats(1.0, 0.0)).unwrap();
        assert_relative_eq!(g, 4.0 / (101.0 * 103.0), max_relative = 1e-14);
        assert!(mse_gap_gss_vs_bess(2, 1, 100, stats(0.0, 1.0)).unwrap() < 0.0);
        assert_eq!(mse_gap_gss_vs_bess(2, 1, 100, stats(0.0, 0.0)).unwrap(), 0.0);
        assert!(mse_gap_gss_vs_bess(2, 1, 3, stats(1.0, 1.0)).is_err());
    }

    #[test]
    fn bound_values() {
        assert_eq!(convergence_bound(0.0, 0.3, 0.0, 2.0, 17).unwrap(), 0.0);
        assert_relative_eq!(convergence_bound(1.0, 0.0, 1.0, 1.0, 100).unwrap(), 0.5);
        assert!(matches!(convergence_bound(1.0, 0.5, 1.0, 1.0, 100), Err(Error::Hypothesis(_))));
        assert!(matches!(convergence_bound(1.0, 0.6, 1.0, 1.0, 100), Err(Error::Hypothesis(_))));
        assert!(convergence_bound(1.0, 0.0, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn trace_quartic_values() {
        let eye = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert_relative_eq!(trace_quartic_closed_form(Moments::GAUSSIAN, 3, &eye).unwrap(), 15.0);
        assert_relative_eq!(trace_quartic_closed_form(Moments::RADEMACHER, 3, &eye).unwrap(), 9.0);
        let traceless = [1.0, 5.0, 2.0, -1.0];
        assert_eq!(trace_quartic_closed_form(Moments::GAUSSIAN, 2, &traceless).unwrap(), 0.0);
        assert!(trace_quartic_closed_form(Moments::GAUSSIAN, 3, &traceless).is_err());
    }

    #[test]
    fn statistics_validation() {
        assert!(ProblemStatistics::new(-1.0, 0.0).is_err());
        assert!(ProblemStatistics::new(0.0, f64::NAN).is_err());
    }
}
