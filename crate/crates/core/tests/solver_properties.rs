//! Invariants of the outer loop checked over seeded random instances.

use modelprox_core::problems::{gen_polytope, gen_qip, QipGenOptions};
use modelprox_core::{InitialGamma, MetricKind, ModelFamily, Problem, Solver, SolverConfig};
use proptest::prelude::*;

fn families() -> impl Strategy<Value = ModelFamily> {
    prop_oneof![
        Just(ModelFamily::Taylor),
        Just(ModelFamily::M1),
        Just(ModelFamily::M2),
        Just(ModelFamily::M3),
    ]
}

fn metrics() -> impl Strategy<Value = MetricKind> {
    prop_oneof![Just(MetricKind::PsdHessian), Just(MetricKind::Bb), Just(MetricKind::Identity)]
}

fn config(metric: MetricKind) -> SolverConfig {
    SolverConfig {
        metric_kind: metric,
        max_outer: 200,
        allow_inexact: true,
        ..SolverConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn qip_trace_invariants(seed in 0u64..10_000, family in families(), metric in metrics()) {
        let problem = Problem::Qip(gen_qip(4, 16, 1e-2, seed, QipGenOptions::default()).unwrap());
        let cfg = config(metric);
        let solver = Solver::new(&problem, family, cfg.clone()).unwrap();
        let result = match solver.run(&problem.default_start()) {
            Ok(r) => r,
            Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
        };
        prop_assert!(result.outer_iterations >= 1);
        prop_assert!(result.total_inner_trials >= result.outer_iterations);
        for (k, r) in result.trace.iter().enumerate() {
            prop_assert_eq!(r.k, k);
            // Descent with the stated slack.
            let drop = (1.0 - cfg.delta) * 0.5 * r.gamma_k * r.step_norm_h * r.step_norm_h;
            prop_assert!(r.f_next <= r.f - drop + 1e-10);
            // Acceptance test on the stored values.
            prop_assert!(r.model_error <= r.acceptance_bound(cfg.delta) * (1.0 + 1e-12));
            // Exact powers of two.
            prop_assert_eq!(r.gamma_k, 2f64.powi(r.i_k as i32 + 1) * r.gamma0);
            prop_assert!(r.gamma0 >= cfg.gamma_min && r.gamma0 <= cfg.gamma_max);
            prop_assert!(r.model_error >= 0.0 && r.step_norm >= 0.0);
        }
        prop_assert_eq!(result.f_final, result.trace.last().unwrap().f_next);
    }

    #[test]
    fn polytope_taylor_descends(seed in 0u64..10_000, p in prop_oneof![Just(2.0), Just(3.0), Just(4.0)]) {
        let problem = Problem::Polytope(gen_polytope(6, 12, p, 2.0, seed).unwrap());
        let cfg = config(MetricKind::PsdHessian);
        let result = Solver::new(&problem, ModelFamily::Taylor, cfg.clone())
            .unwrap()
            .run(&problem.default_start())
            .unwrap();
        let fs: Vec<f64> = result.trace.iter().map(|r| r.f_next).collect();
        prop_assert!(fs.windows(2).all(|w| w[1] <= w[0] + 1e-10));
        prop_assert!(fs.iter().all(|f| *f >= 0.0));
    }

    #[test]
    fn runs_are_deterministic(seed in 0u64..10_000, family in families(), metric in metrics()) {
        let problem = Problem::Qip(gen_qip(3, 12, 1e-2, seed, QipGenOptions::default()).unwrap());
        let run = || Solver::new(&problem, family, config(metric)).unwrap().run(&problem.default_start());
        prop_assert_eq!(run(), run());
    }
}

#[test]
fn fixed_initial_gamma_is_respected() {
    let problem = Problem::Qip(gen_qip(4, 16, 1e-2, 3, QipGenOptions::default()).unwrap());
    let cfg = SolverConfig {
        initial_gamma: InitialGamma::Fixed(3.0),
        tau: 4.0,
        ..SolverConfig::default()
    };
    let result = Solver::new(&problem, ModelFamily::Taylor, cfg).unwrap().run(&problem.default_start()).unwrap();
    for r in &result.trace {
        assert_eq!(r.gamma0, 3.0);
        assert_eq!(r.gamma_k, 4f64.powi(r.i_k as i32 + 1) * 3.0);
    }
}

#[test]
fn bb_metric_scale_stays_clamped() {
    use modelprox_core::solver::bb_scale;
    for (s, y) in [([1.0, 0.0], [1e-20, 0.0]), ([1e-20, 0.0], [1.0, 0.0]), ([1.0, 1.0], [2.0, 2.0])] {
        let l = bb_scale(&s, &y, 1.0, 0.5);
        assert!((0.5..=1e12).contains(&l), "{l}");
    }
}
