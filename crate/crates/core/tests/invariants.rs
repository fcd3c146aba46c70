//! Properties every integrated profile must satisfy, checked on random admissible speeds.

use bowlforge::profile::{analyze, check_convexity};
use bowlforge::{IntegrationConfig, SpeedFunction, Translator};
use proptest::prelude::*;

fn check_profile(id: &str, n: usize, r_max: f64) {
    let t = Translator::new(SpeedFunction::from_id(id, n).unwrap()).unwrap();
    let cfg = IntegrationConfig::with_r_max(r_max);
    let sol = t
        .integrate(&cfg)
        .unwrap_or_else(|e| panic!("{id} n={n}: {e}"));
    let gamma = t.slope_at_origin();

    let sub = t.subsolution();
    for s in sol.samples.iter().filter(|s| s.v.is_finite()) {
        let w = sub.w_of_r(s.r);
        assert!(
            s.v >= w * (1.0 - 1e-9),
            "{id} n={n}: v({}) = {} below {w}",
            s.r,
            s.v
        );
        if let Some(sup) = t.supersolution() {
            let w = sup.w_of_r(s.r);
            assert!(
                s.v <= w * (1.0 + 1e-9),
                "{id} n={n}: v({}) = {} above {w}",
                s.r,
                s.v
            );
        }
    }

    let bowl = analyze(t.context(), &sol);
    assert!(
        bowl.max_residual() < 1e-8,
        "{id} n={n}: residual {}",
        bowl.max_residual()
    );
    let tip = bowl.tip_curvature_deviation(2.0 * cfg.r_start).unwrap();
    assert!(tip < 1e-4, "{id} n={n}: tip deviation {tip}");

    let conv = check_convexity(&bowl);
    assert!(conv.passed, "{id} n={n}: {conv:?}");
    // near the tip the slope ratio is pinned to gamma by the subsolution
    for s in bowl.samples.iter().filter(|s| s.r <= 10.0 * cfg.r_start) {
        assert!(
            s.v / s.r >= gamma * (1.0 - 1e-6),
            "{id} n={n}: v/r = {} at {}",
            s.v / s.r,
            s.r
        );
    }
    assert_eq!(bowl.samples[0].u, gamma * cfg.r_start * cfg.r_start / 2.0);
    assert!(bowl
        .samples
        .windows(2)
        .all(|w| w[1].u >= w[0].u && w[1].r > w[0].r));
}

#[test]
fn builtin_catalog() {
    for n in 2..=5 {
        check_profile("mean", n, 100.0);
    }
    for n in 3..=5 {
        check_profile("scalar", n, 100.0);
    }
    for n in 2..=4 {
        check_profile("harmonic-mean", n, 10.0);
    }
    for alpha in [0.25, 0.5, 1.0, 1.5, 2.0, 3.0] {
        for n in [2, 3] {
            check_profile(&format!("gauss:{alpha}"), n, 100.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn power_means(p in -3.0f64..3.0, alpha in 0.3f64..3.0, n in 2usize..5) {
        prop_assume!(p.abs() > 0.05);
        check_profile(&format!("power-mean:{p}:{alpha}"), n, 20.0);
    }

    #[test]
    fn gauss_powers(alpha in 0.2f64..4.0, n in 2usize..5) {
        check_profile(&format!("gauss:{alpha}"), n, 20.0);
    }
}
