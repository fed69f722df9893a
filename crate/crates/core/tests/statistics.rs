use gensmooth_core::estimators::{empirical_mse, EstimatorConfig, EstimatorKind};
use gensmooth_core::linalg::{dot, norm_sq};
use gensmooth_core::problems::{DfoFunction, DfoObjective, EvalContext, LinRegModel, Problem};
use gensmooth_core::randomness::RngStream;
use gensmooth_core::samplers::{gs_shrinkage_variance, sample_directions, SamplerKind, SamplerSpec};
use gensmooth_core::theory::distribution_moments;

/// Raw moments about the known zero mean and delta-method standard errors
/// for the mean, variance and kurtosis estimates.
struct RawMoments {
    mean: f64,
    mean_se: f64,
    var: f64,
    var_se: f64,
    kurt: f64,
    kurt_se: f64,
}

fn raw_moments(xs: &[f64]) -> RawMoments {
    let n = xs.len() as f64;
    let m = |p: i32| xs.iter().map(|x| x.powi(p)).sum::<f64>() / n;
    let (m1, m2, m4, m6, m8) = (m(1), m(2), m(4), m(6), m(8));
    let var_x2 = (m4 - m2 * m2).max(0.0);
    let var_x4 = (m8 - m4 * m4).max(0.0);
    let cov = m6 - m2 * m4;
    let kurt = m4 / (m2 * m2);
    let kurt_var = (var_x4 / m2.powi(4) - 4.0 * m4 * cov / m2.powi(5) + 4.0 * m4 * m4 * var_x2 / m2.powi(6)).max(0.0);
    RawMoments {
        mean: m1,
        mean_se: ((m2 - m1 * m1) / n).sqrt(),
        var: m2,
        var_se: (var_x2 / n).sqrt(),
        kurt,
        kurt_se: (kurt_var / n).sqrt(),
    }
}

fn within(value: f64, target: f64, se: f64) -> bool {
    (value - target).abs() <= 3.0 * se + 1e-12
}

#[test]
fn pooled_entries_have_zero_mean_and_analytic_moments() {
    let (l, d) = (4, 250);
    for kind in [SamplerKind::Gs, SamplerKind::Bes, SamplerKind::GsShrinkage, SamplerKind::BesShrinkage] {
        let spec = SamplerSpec::new(kind, l, d).unwrap();
        let target = distribution_moments(&spec).unwrap();
        let root = RngStream::new(17);
        let mut pool = Vec::with_capacity(1_000_000);
        for i in 0..1_000 {
            pool.extend_from_slice(sample_directions(&spec, l, d, &root.derive(i)).unwrap().entries());
        }
        let got = raw_moments(&pool);
        assert!(within(got.mean, 0.0, got.mean_se), "{kind} mean {}", got.mean);
        assert!(within(got.var, target.variance, got.var_se), "{kind} var {} vs {}", got.var, target.variance);
        assert!(within(got.kurt, target.kurtosis, got.kurt_se), "{kind} kurt {} vs {}", got.kurt, target.kurtosis);
    }
}

#[test]
fn shrinkage_variances_match_table_values() {
    let (l, d) = (4, 250);
    let gs = distribution_moments(&SamplerSpec::new(SamplerKind::GsShrinkage, l, d).unwrap()).unwrap();
    assert!((gs.variance - 4.0 / 255.0).abs() < 1e-15);
    assert_eq!(gs.kurtosis, 3.0);
    let bes = distribution_moments(&SamplerSpec::new(SamplerKind::BesShrinkage, l, d).unwrap()).unwrap();
    assert!((bes.variance - 4.0 / 253.0).abs() < 1e-15);
    assert!((bes.kurtosis - 1.0).abs() < 1e-12);
}

#[test]
fn orthogonal_rows_for_random_shapes() {
    let mut meta = RngStream::new(99);
    for case in 0..100u64 {
        let d = 1 + (meta.uniform() * 60.0) as usize;
        let l = 1 + (meta.uniform() * d as f64) as usize;
        let l = l.min(d);
        let spec = SamplerSpec::new(SamplerKind::OrthogonalEs, l, d).unwrap();
        let set = sample_directions(&spec, l, d, &RngStream::new(1000 + case)).unwrap();
        for i in 0..l {
            for j in 0..i {
                let ip = dot(set.row(i), set.row(j));
                assert!(ip.abs() < 1e-8, "case {case} (L={l}, d={d}) rows {i},{j}: {ip}");
            }
        }
    }
}

fn linreg_point(seed: u64, d: usize) -> (LinRegModel, Vec<f64>) {
    let expected = 1.0 + 1.0 / (3.0 * d as f64);
    let model = LinRegModel::from_mean_qgamma(vec![expected; d]).unwrap();
    let theta = RngStream::new(seed).standard_normal(d);
    (model, theta)
}

#[test]
fn fd_bias_vanishes_for_unit_variance_families() {
    let d = 100;
    let (model, theta) = linreg_point(5, d);
    let grad_sq = norm_sq(&model.analytic_gradient(&theta));
    let cfg = EstimatorConfig::new(EstimatorKind::ForwardDifference, 1e-4, 2, 5).unwrap();
    let r = 100_000;
    for kind in [SamplerKind::Gs, SamplerKind::Bes] {
        let spec = SamplerSpec::new(kind, 2, d).unwrap();
        let m = empirical_mse(&model, &theta, &cfg, &spec, r, &RngStream::new(21)).unwrap();
        // E||mean - mu||^2 = trace(Var)/R is the Monte Carlo floor of the squared bias.
        let floor = m.decomposition.trace_variance / r as f64;
        assert!(
            m.decomposition.squared_bias < 0.01 * grad_sq + 3.0 * floor,
            "{kind}: bias {} vs |grad|^2 {grad_sq}",
            m.decomposition.squared_bias
        );
    }
}

#[test]
fn fd_bias_matches_shrinkage_factor() {
    let (l, d) = (2, 100);
    let (model, theta) = linreg_point(6, d);
    let grad_sq = norm_sq(&model.analytic_gradient(&theta));
    let cfg = EstimatorConfig::new(EstimatorKind::ForwardDifference, 1e-4, l, 5).unwrap();
    let spec = SamplerSpec::new(SamplerKind::GsShrinkage, l, d).unwrap();
    let m = empirical_mse(&model, &theta, &cfg, &spec, 100_000, &RngStream::new(22)).unwrap();
    let s2 = gs_shrinkage_variance(l, d);
    let expected = (s2 - 1.0) * (s2 - 1.0) * grad_sq;
    let rel = (m.decomposition.squared_bias - expected).abs() / expected;
    assert!(rel < 0.05, "bias {} vs {expected}", m.decomposition.squared_bias);
}

#[test]
fn fd_mean_is_variance_times_gradient_on_noiseless_linear() {
    struct Linear(Vec<f64>);
    impl Problem for Linear {
        type Sample = ();
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn capabilities(&self) -> gensmooth_core::problems::Capabilities {
            gensmooth_core::problems::Capabilities {
                noisy_eval: false,
                exact_objective: true,
                analytic_gradient: true,
            }
        }
        fn draw_sample(&self, _: &mut RngStream) {}
        fn evaluate(&self, theta: &[f64], _: &(), _: EvalContext<'_>) -> f64 {
            dot(&self.0, theta)
        }
        fn gradient(&self, _: &[f64]) -> Option<Vec<f64>> {
            Some(self.0.clone())
        }
    }
    let (l, d) = (3, 6);
    let a = vec![1.0, -0.5, 2.0, 0.0, 3.0, -1.5];
    let problem = Linear(a.clone());
    let cfg = EstimatorConfig::new(EstimatorKind::ForwardDifference, 1e-4, l, 1).unwrap();
    for kind in [SamplerKind::Gs, SamplerKind::Bes, SamplerKind::GsShrinkage, SamplerKind::BesShrinkage] {
        let spec = SamplerSpec::new(kind, l, d).unwrap();
        let s2 = distribution_moments(&spec).unwrap().variance;
        let root = RngStream::new(31);
        let n = 100_000;
        let mut sum = vec![0.0; d];
        let mut sum_sq = vec![0.0; d];
        for r in 0..n {
            let rep = root.derive(r);
            let dirs = sample_directions(&spec, l, d, &rep.derive(0)).unwrap();
            let g = gensmooth_core::estimators::estimate(&problem, &[0.0; 6], &cfg, &dirs, &rep.derive(1)).unwrap();
            for j in 0..d {
                sum[j] += g.vector[j];
                sum_sq[j] += g.vector[j] * g.vector[j];
            }
        }
        for j in 0..d {
            let mean = sum[j] / n as f64;
            let se = ((sum_sq[j] / n as f64 - mean * mean) / n as f64).sqrt();
            assert!(within(mean, s2 * a[j], se), "{kind} coord {j}: {mean} vs {}", s2 * a[j]);
        }
    }
}

#[test]
fn noisy_benchmarks_are_unbiased() {
    let d = 5;
    let mut meta = RngStream::new(3);
    for f in DfoFunction::ALL {
        let obj = DfoObjective::new(f, d, 0.1).unwrap();
        for t in 0..5u64 {
            let theta: Vec<f64> = meta.standard_normal(d).iter().map(|x| 0.5 * x).collect();
            let root = RngStream::new(500 + t);
            let n = 100_000u64;
            let (mut s, mut s2) = (0.0, 0.0);
            for i in 0..n {
                let v = obj.evaluate(&theta, &(), EvalContext::new(&root, [0, 0, i]));
                s += v;
                s2 += v * v;
            }
            let mean = s / n as f64;
            let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
            assert!(within(mean, f.value(&theta), se), "{f}: {mean} vs {}", f.value(&theta));
        }
    }
}

#[test]
fn linreg_noisy_loss_is_unbiased_at_random_points() {
    let d = 10;
    let (model, _) = linreg_point(0, d);
    for t in 0..5u64 {
        let theta = RngStream::new(40 + t).standard_normal(d);
        let root = RngStream::new(60 + t);
        let n = 100_000u64;
        let (mut s, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let point = model.draw_sample(&mut root.derive(i));
            let v = model.evaluate(&theta, &point, EvalContext::new(&root, [1, 0, i]));
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        let exact = model.exact_objective(&theta);
        assert!(within(mean, exact, se), "theta {t}: {mean} vs {exact}");
    }
}
