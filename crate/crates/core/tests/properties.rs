use gensmooth_core::estimators::{estimate, EstimatorConfig, EstimatorKind};
use gensmooth_core::linalg::{dot, norm_sq};
use gensmooth_core::optimizer::{sgd_step, Direction, StepIndex};
use gensmooth_core::problems::{Capabilities, DfoFunction, EvalContext, Problem};
use gensmooth_core::randomness::RngStream;
use gensmooth_core::samplers::{
    bes_shrinkage_scale, gs_shrinkage_variance, orthogonalize, sample_directions, DirectionSet, SamplerKind,
    SamplerSpec,
};
use gensmooth_core::theory::{
    bes_shrinkage_objective, convergence_bound, fd_mse_closed_form, gs_shrinkage_objective, mse_gap_gss_vs_bess,
    trace_quartic_closed_form, Moments, ProblemStatistics,
};
use proptest::prelude::*;

struct Linear {
    a: Vec<f64>,
    b: f64,
}

impl Problem for Linear {
    type Sample = ();
    fn dim(&self) -> usize {
        self.a.len()
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            noisy_eval: false,
            exact_objective: true,
            analytic_gradient: true,
        }
    }
    fn draw_sample(&self, _: &mut RngStream) {}
    fn evaluate(&self, theta: &[f64], _: &(), _: EvalContext<'_>) -> f64 {
        dot(&self.a, theta) + self.b
    }
}

const AT: StepIndex = StepIndex { round: 1, iteration: 0 };

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

fn moments_for(kind: SamplerKind, l: usize, d: usize) -> Moments {
    gensmooth_core::theory::distribution_moments(&SamplerSpec::new(kind, l, d).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derived_streams_are_pure(seed in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        let root = RngStream::new(seed);
        let mut x = root.derive(a).derive(b);
        let mut y = RngStream::new(seed).derive(a).derive(b);
        let xs: Vec<f64> = (0..8).map(|_| x.normal()).collect();
        let ys: Vec<f64> = (0..8).map(|_| y.normal()).collect();
        prop_assert_eq!(xs, ys);
    }

    #[test]
    fn consuming_parent_does_not_change_children(seed in any::<u64>(), label in any::<u64>(), skip in 0usize..50) {
        let mut parent = RngStream::new(seed);
        let before = parent.derive(label).uniform();
        for _ in 0..skip {
            parent.uniform();
        }
        prop_assert_eq!(parent.derive(label).uniform(), before);
    }

    #[test]
    fn sgd_two_steps_equal_one_double_step(
        theta in prop::collection::vec(-10.0f64..10.0, 1..8),
        lr in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let g = RngStream::new(seed).standard_normal(theta.len());
        let two = sgd_step(&sgd_step(&theta, &g, lr, Direction::Minimize, AT).unwrap(), &g, lr, Direction::Minimize, AT).unwrap();
        let one = sgd_step(&theta, &g, 2.0 * lr, Direction::Minimize, AT).unwrap();
        for (x, y) in two.iter().zip(&one) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
        let up = sgd_step(&theta, &g, lr, Direction::Maximize, AT).unwrap();
        let down = sgd_step(&theta, &g, lr, Direction::Minimize, AT).unwrap();
        for ((u, dn), t) in up.iter().zip(&down).zip(&theta) {
            prop_assert!((u + dn - 2.0 * t).abs() <= 1e-12 * (1.0 + t.abs()));
        }
    }

    #[test]
    fn linear_estimates_do_not_depend_on_spacing(
        d in 1usize..12,
        l in 1usize..6,
        n in 1usize..4,
        seed in any::<u64>(),
    ) {
        let mut s = RngStream::new(seed);
        let a = s.standard_normal(d);
        let theta = s.standard_normal(d);
        let problem = Linear { a, b: s.normal() };
        let spec = SamplerSpec::new(SamplerKind::Gs, l, d).unwrap();
        let dirs = sample_directions(&spec, l, d, &s.derive(1)).unwrap();
        for kind in [EstimatorKind::ForwardDifference, EstimatorKind::Antithetic] {
            let mut reference: Option<Vec<f64>> = None;
            for c in [1e-6, 1e-2, 1.0] {
                let cfg = EstimatorConfig::new(kind, c, l, n).unwrap();
                let g = estimate(&problem, &theta, &cfg, &dirs, &s.derive(2)).unwrap();
                if let Some(r) = &reference {
                    // cancellation in f(theta + c e) - f(theta) grows like |f| / c
                    let u_max = dirs.rows().map(|u| norm_sq(u).sqrt()).fold(0.0, f64::max);
                    let f_mag = norm_sq(&problem.a).sqrt() * (norm_sq(&theta).sqrt() + u_max) + problem.b.abs();
                    let scale = norm_sq(r).sqrt() + f_mag * u_max;
                    for (x, y) in g.vector.iter().zip(r) {
                        prop_assert!((x - y).abs() <= 1e-8 * scale, "{} vs {}", x, y);
                    }
                }
                reference.get_or_insert(g.vector);
            }
        }
    }

    #[test]
    fn evaluation_count_matches_formula(l in 1usize..8, n in 1usize..8) {
        let fd = EstimatorConfig::new(EstimatorKind::ForwardDifference, 0.1, l, n).unwrap();
        let at = EstimatorConfig::new(EstimatorKind::Antithetic, 0.1, l, n).unwrap();
        let problem = Linear { a: vec![1.0; 3], b: 0.0 };
        let spec = SamplerSpec::new(SamplerKind::Bes, l, 3).unwrap();
        let dirs = sample_directions(&spec, l, 3, &RngStream::new(0)).unwrap();
        let g = estimate(&problem, &[0.0; 3], &fd, &dirs, &RngStream::new(1)).unwrap();
        prop_assert_eq!(g.evaluations_used, (l * n + n) as u64);
        let g = estimate(&problem, &[0.0; 3], &at, &dirs, &RngStream::new(1)).unwrap();
        prop_assert_eq!(g.evaluations_used, (2 * l * n) as u64);
    }

    #[test]
    fn orthogonal_sets_are_orthogonal_with_raw_norms(d in 1usize..40, extra in 0usize..40, seed in any::<u64>()) {
        let l = 1 + extra % d.max(1);
        let l = l.min(d);
        let raw = RngStream::new(seed).standard_normal(l * d);
        let rows: Vec<Vec<f64>> = raw.chunks(d).map(|r| r.to_vec()).collect();
        let spec = SamplerSpec::new(SamplerKind::Gs, l, d).unwrap();
        let set = DirectionSet::from_rows(&rows, sample_directions(&spec, l, d, &RngStream::new(0)).unwrap().spec).unwrap();
        let orth = orthogonalize(&set).unwrap();
        for i in 0..l {
            let want = norm_sq(&rows[i]).sqrt();
            prop_assert!((norm_sq(orth.row(i)).sqrt() - want).abs() <= 1e-9 * want);
            for j in 0..i {
                prop_assert!(dot(orth.row(i), orth.row(j)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn gs_shrinkage_optimum_beats_every_variance(l in 1usize..200, d in 1usize..2000, v in 1e-6f64..2.0) {
        let star = gs_shrinkage_variance(l, d);
        prop_assert!(gs_shrinkage_objective(star, l, d) <= gs_shrinkage_objective(v, l, d) + 1e-15);
    }

    #[test]
    fn bes_shrinkage_optimum_beats_every_cell(
        l in 1usize..200,
        d in 1usize..2000,
        p in 0.01f64..0.99,
        m in 0.05f64..20.0,
    ) {
        prop_assume!(l + d > 5);
        let star = bes_shrinkage_scale(l, d).unwrap();
        prop_assert!(bes_shrinkage_objective(0.5, star, l, d) <= bes_shrinkage_objective(p, m, l, d) + 1e-12);
    }

    #[test]
    fn closed_form_orderings(
        l in 1usize..100,
        d in 2usize..1000,
        n in 1usize..50,
        g in 0.0f64..100.0,
        t in 0.0f64..100.0,
    ) {
        prop_assume!(l + d > 5);
        prop_assume!(g + t > 0.0);
        let stats = ProblemStatistics::new(g, t).unwrap();
        let mse = |kind| fd_mse_closed_form(moments_for(kind, l, d), l, n, d, stats).unwrap().total;
        let (gs, bes, gss, bess) = (
            mse(SamplerKind::Gs),
            mse(SamplerKind::Bes),
            mse(SamplerKind::GsShrinkage),
            mse(SamplerKind::BesShrinkage),
        );
        prop_assert!(bes < gs);
        prop_assert!(gss < gs);
        prop_assert!(bess < bes);
        let gap = mse_gap_gss_vs_bess(l, n, d, stats).unwrap();
        prop_assert!(close(gap, gss - bess, 1e-9) || (gap - (gss - bess)).abs() < 1e-12 * gs);
    }

    #[test]
    fn closed_form_total_splits_into_bias_and_variance(
        s2 in 0.01f64..2.0,
        k in 1.0f64..9.0,
        l in 1usize..50,
        n in 1usize..50,
        d in 1usize..500,
        g in 0.0f64..100.0,
        t in 0.0f64..100.0,
    ) {
        let m = fd_mse_closed_form(Moments { variance: s2, kurtosis: k }, l, n, d, ProblemStatistics::new(g, t).unwrap()).unwrap();
        let terms = m.terms.unwrap();
        prop_assert!(close(m.total, m.squared_bias + m.trace_variance, 1e-12) || m.total == 0.0);
        prop_assert!(close(m.total, terms.gradient + terms.noise, 1e-12) || m.total == 0.0);
        prop_assert!((m.squared_bias - (s2 - 1.0).powi(2) * g).abs() <= 1e-12 * (1.0 + m.squared_bias));
        prop_assert!(m.trace_variance >= -1e-12);
    }

    #[test]
    fn convergence_bound_is_monotone(
        m in 0.0f64..10.0,
        b in 0.0f64..0.49,
        delta in 0.0f64..10.0,
        mu in 0.01f64..10.0,
        t in 1u64..10_000,
    ) {
        let v = convergence_bound(m, b, delta, mu, t).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert!(convergence_bound(m, b, delta, mu, t * 4).unwrap() <= v);
        prop_assert!(convergence_bound(m + 1.0, b, delta, mu, t).unwrap() > v);
        prop_assert!(convergence_bound(m, 0.5 + b, delta, mu, t).is_err());
    }

    #[test]
    fn trace_quartic_is_linear_in_the_matrix(d in 1usize..8, seed in any::<u64>(), alpha in -3.0f64..3.0) {
        let mut s = RngStream::new(seed);
        let a = s.standard_normal(d * d);
        let b = s.standard_normal(d * d);
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + y).collect();
        for mo in [Moments::GAUSSIAN, Moments::RADEMACHER, Moments { variance: 0.3, kurtosis: 2.0 }] {
            let lhs = trace_quartic_closed_form(mo, d, &mix).unwrap();
            let rhs = alpha * trace_quartic_closed_form(mo, d, &a).unwrap() + trace_quartic_closed_form(mo, d, &b).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn benchmark_values_are_nonnegative(theta in prop::collection::vec(-5.0f64..5.0, 1..10)) {
        for f in DfoFunction::ALL {
            prop_assert!(f.value(&theta) >= 0.0);
        }
    }
}
