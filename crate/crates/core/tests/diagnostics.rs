use std::f64::consts::PI;

use lbe_core::diagnostics::{
    chord_volume, picard_verdict, scaling_verdict, uniqueness_verdict, verify_change_of_variables,
    verify_chord_volume, verify_circle_lemma, verify_operator_inequalities, verify_tau_gradients,
};
use lbe_core::solver::{least_squares, IterationRow, ScalingRow, ScalingStudy};
use lbe_core::{
    ConvexDomain, Error, GridResolution, IterationReport, KernelParams, LineQuadrature,
    OperatorContext, SolveConfig, Vec3,
};
use proptest::prelude::*;

fn study(pairs: &[(f64, f64)]) -> ScalingStudy {
    let pts: Vec<(f64, f64)> = pairs.iter().map(|(k, r)| (k.ln(), r.ln())).collect();
    let (alpha, intercept) = least_squares(&pts);
    ScalingStudy {
        alpha,
        intercept,
        rows: pairs
            .iter()
            .map(|&(kappa, contraction)| ScalingRow {
                kappa,
                diameter: 2.0 * kappa,
                contraction,
                stability: 0.0,
            })
            .collect(),
    }
}

#[test]
fn change_of_variables_with_position_dependence() {
    let domain = ConvexDomain::ellipsoid([0.5, 0.35, 0.25], [0.2, -0.1, 0.0]).unwrap();
    let integrand = |x: &Vec3, v: &Vec3, s: f64| s * (1.0 + x.x + 0.5 * x.y * x.y) * (-v.norm_squared()).exp();
    let v = verify_change_of_variables(&domain, GridResolution::new(4, 4, 8, 6), 4.0, &integrand).unwrap();
    assert!(v.pass, "{v:?}");
    assert!(v.constant > 0.0);
    assert_eq!(v.refinement_deltas.len(), 2);
}

#[test]
fn chord_volume_scales_with_radius() {
    for r in [0.25, 0.5, 2.0] {
        let d = ConvexDomain::sphere(r, [1.0, -2.0, 0.5]).unwrap();
        let val = chord_volume(&d, &Vec3::z(), GridResolution::default()).unwrap();
        let exact = PI * r.powi(4);
        assert!((val - exact).abs() <= 5e-3 * exact, "{r}: {val}");
        assert!(verify_chord_volume(&d, GridResolution::default()).unwrap().pass);
    }
    // τ is inversely proportional to |v|.
    let ball = ConvexDomain::unit_ball();
    let slow = chord_volume(&ball, &(Vec3::x() * 0.5), GridResolution::default()).unwrap();
    let unit = chord_volume(&ball, &Vec3::x(), GridResolution::default()).unwrap();
    assert!((slow - 2.0 * unit).abs() <= 1e-10 * slow);
}

#[test]
fn ellipsoid_geometry_checks() {
    let d = ConvexDomain::ellipsoid([1.0, 0.7, 0.5], [0.0; 3]).unwrap();
    let chord = verify_circle_lemma(&d, 10_000, 3).unwrap();
    assert!(chord.pass, "{chord:?}");
    assert!(chord.constant >= 2.0 * 0.5);
    let grads = verify_tau_gradients(&d, 2_000, 3).unwrap();
    assert!(grads.pass, "{grads:?}");
    assert!(verify_chord_volume(&d, GridResolution::default()).unwrap().pass);
}

#[test]
fn scaling_verdict_thresholds() {
    let kappas: [f64; 5] = [1.0, 0.5, 0.25, 0.125, 0.0625];
    let sqrt_law: Vec<(f64, f64)> = kappas.iter().map(|k| (*k, 0.4 * k.sqrt())).collect();
    let v = scaling_verdict(&study(&sqrt_law), 1);
    assert!(v.pass);
    assert!((v.constant - 0.5).abs() < 1e-12);

    let shallow: Vec<(f64, f64)> = kappas.iter().map(|k| (*k, 0.4 * k.powf(0.4))).collect();
    assert!(!scaling_verdict(&study(&shallow), 1).pass);

    // A 9% bump is noise, a 12% bump is not.
    let mut bumped = sqrt_law.clone();
    bumped[2].1 = 1.09 * bumped[1].1;
    assert!(scaling_verdict(&study(&bumped), 1).pass);
    bumped[2].1 = 1.12 * bumped[1].1;
    let v = scaling_verdict(&study(&bumped), 1);
    assert!(!v.pass && (v.violation - 0.12).abs() < 1e-9, "{v:?}");
}

#[test]
fn solve_verdict_thresholds() {
    let cfg = SolveConfig::default();
    let row = |i: usize, delta: f64, ratio: Option<f64>| IterationRow {
        iteration: i,
        delta,
        ratio,
        norm: 1.0,
        h1: None,
    };
    let good = IterationReport {
        rows: vec![row(1, 1.0, None), row(2, 0.1, Some(0.1)), row(3, 0.01, Some(0.1)), row(4, 1e-9, Some(1e-7))],
        final_residual: 2.0 * cfg.tolerance,
        converged: true,
        wall_time_s: 0.0,
    };
    assert!(picard_verdict(&good, &cfg).pass);
    let loose = IterationReport {
        final_residual: 2.01 * cfg.tolerance,
        ..good.clone()
    };
    assert!(!picard_verdict(&loose, &cfg).pass);
    let stalled = IterationReport {
        rows: vec![row(1, 1.0, None), row(2, 1.0, Some(1.0))],
        ..good
    };
    assert!(!picard_verdict(&stalled, &cfg).pass);

    assert!(uniqueness_verdict(4.0 * cfg.tolerance, 3, &cfg).pass);
    assert!(!uniqueness_verdict(4.01 * cfg.tolerance, 3, &cfg).pass);
}

#[test]
fn inequality_suite_needs_sixteen_trials() {
    let ctx = OperatorContext::new(
        &ConvexDomain::sphere(0.1, [0.0; 3]).unwrap(),
        KernelParams::default(),
        GridResolution::new(2, 2, 4, 2),
        6.0,
        LineQuadrature { order: 4, split: true },
        4,
    )
    .unwrap();
    assert!(matches!(
        verify_operator_inequalities(&ctx, &ctx, &ctx, 15, 1),
        Err(Error::ParameterRange(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chord_identity_on_any_sphere(r in 0.01..10.0f64, seed in any::<u64>()) {
        // Offset in units of r: a fixed offset adds roundoff ~ eps |centre| / r.
        let d = ConvexDomain::sphere(r, [0.3 * r, 0.0, -r]).unwrap();
        let v = verify_circle_lemma(&d, 10_000, seed).unwrap();
        prop_assert!(v.pass);
        prop_assert_eq!(v.constant, 2.0 * r);
    }
}
