use approx::assert_relative_eq;
use lbe_core::kernel::{caflisch_decay_probe, grad_k_moment, kernel_moment, ProbeQuadrature};
use lbe_core::{Error, KernelParams, Vec3};
use proptest::prelude::*;

fn v3(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

fn params() -> impl Strategy<Value = KernelParams> {
    (0.05..0.95f64, 0.0..=1.0f64, 0.1..3.0f64, 0.1..3.0f64)
        .prop_map(|(rho, gamma, a, nu0)| KernelParams::new(rho, gamma, a, nu0).unwrap())
}

fn velocity() -> impl Strategy<Value = Vec3> {
    (-6.0..6.0f64, -6.0..6.0f64, -6.0..6.0f64).prop_map(|(a, b, c)| v3(a, b, c))
}

fn probes() -> Vec<Vec3> {
    [0.0, 2.0, 5.0].iter().map(|s| v3(0.0, 0.0, *s)).collect()
}

/// The kernel written out from its definition, energy term in the
/// cancellation-prone form `(|v|² − |v*|²)/|v − v*|`.
fn k_reference(p: &KernelParams, v: &Vec3, w: &Vec3) -> f64 {
    let r = (v - w).norm();
    let e = (v.norm_squared() - w.norm_squared()) / r;
    p.amplitude / r
        * (1.0 + v.norm() + w.norm()).powf(p.gamma - 1.0)
        * (-(1.0 - p.rho) / 4.0 * (r * r + e * e)).exp()
}

#[test]
fn frequency_and_kernel_examples() {
    let p = KernelParams::new(0.5, 1.0, 1.0, 1.0).unwrap();
    assert_eq!(p.nu(&v3(3.0, 0.0, 0.0)), 4.0);
    assert_relative_eq!(p.grad_nu(&v3(0.0, 4.0, 0.0)).unwrap(), v3(0.0, 1.0, 0.0));
    let k = p.k_eval(&Vec3::zeros(), &v3(1.0, 0.0, 0.0)).unwrap();
    assert_relative_eq!(k, (-0.25f64).exp(), max_relative = 1e-14);
    assert_relative_eq!(k, 0.778801, epsilon = 1e-6);
    assert_eq!(p.k_eval(&v3(1.0, 0.0, 0.0), &Vec3::zeros()).unwrap(), k);
    assert!(matches!(
        p.k_eval(&v3(0.5, 0.0, 0.0), &v3(0.5, 0.0, 0.0)),
        Err(Error::CoincidentVelocities)
    ));
    let flat = KernelParams::new(0.5, 0.0, 1.0, 2.0).unwrap();
    assert_eq!(flat.nu(&Vec3::zeros()), 2.0);
    assert_eq!(flat.grad_nu(&v3(1.0, 2.0, 3.0)).unwrap(), Vec3::zeros());
}

#[test]
fn gradient_matches_differences_at_the_reference_pair() {
    let p = KernelParams::new(0.5, 1.0, 1.0, 1.0).unwrap();
    let (v, w) = (v3(0.0, 0.0, 0.0), v3(1.0, 0.0, 0.0));
    // |v| has a kink at 0; with gamma = 1 the kernel does not see it
    let g = p.grad_v_k(&v, &w).unwrap();
    let h = 1e-6;
    for k in 0..3 {
        let e = Vec3::ith(k, h);
        let fd = (p.k_eval(&(v + e), &w).unwrap() - p.k_eval(&(v - e), &w).unwrap()) / (2.0 * h);
        assert!((g[k] - fd).abs() <= 1e-6 * g.norm(), "{k}: {} vs {fd}", g[k]);
    }
}

#[test]
fn moment_probes_are_finite_and_stable() {
    let p = KernelParams::default();
    let q = ProbeQuadrature::default();
    for (mu1, mu2) in [(1.0, 1.0), (2.0, 0.5), (1.5, 1.0)] {
        let probe = kernel_moment(&p, mu1, mu2, &probes(), &q).unwrap();
        assert!(probe.sup_estimate.is_finite() && probe.sup_estimate > 0.0);
        let fine = kernel_moment(&p, mu1, mu2, &probes(), &q.refined()).unwrap();
        let drift = (fine.sup_estimate / probe.sup_estimate - 1.0).abs();
        assert!(drift < 0.05, "({mu1},{mu2}) drift {drift}");
    }
    assert!(matches!(
        kernel_moment(&p, 2.0, 1.0, &probes(), &q),
        Err(Error::ParameterRange(_))
    ));
}

#[test]
fn decay_probe_ratios_are_bounded() {
    let p = KernelParams::default();
    let q = ProbeQuadrature::default();
    let speeds = [0.0, 1.0, 2.0, 4.0, 8.0];
    for mu in [1.5, 2.0] {
        let ratios: Vec<f64> = caflisch_decay_probe(&p, mu, &speeds, &q)
            .unwrap()
            .iter()
            .map(|r| r.1)
            .collect();
        let max = ratios.iter().copied().fold(f64::MIN, f64::max);
        let min = ratios.iter().copied().fold(f64::MAX, f64::min);
        assert!(min > 0.0 && max / min < 20.0, "mu {mu}: {ratios:?}");
    }
    assert!(caflisch_decay_probe(&p, 3.0, &speeds, &q).is_err());
}

#[test]
fn gradient_moments_are_bounded() {
    let p = KernelParams::default();
    let q = ProbeQuadrature::default();
    let speeds = [0.5, 1.0, 2.0, 4.0, 8.0];
    for mu in [0.75, 1.25] {
        let m = grad_k_moment(&p, mu, &speeds, &q).unwrap();
        let max = m.iter().map(|r| r.1).fold(f64::MIN, f64::max);
        assert!(max.is_finite() && max > 0.0, "mu {mu}: {m:?}");
    }
    assert!(matches!(
        grad_k_moment(&p, 1.5, &speeds, &q),
        Err(Error::ParameterRange(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn kernel_is_exactly_symmetric(p in params(), v in velocity(), w in velocity()) {
        prop_assume!((v - w).norm() > 1e-6);
        prop_assert_eq!(p.k_eval(&v, &w).unwrap(), p.k_eval(&w, &v).unwrap());
    }

    #[test]
    fn kernel_matches_its_definition(p in params(), v in velocity(), w in velocity()) {
        prop_assume!((v - w).norm() > 1e-3);
        let k = p.k_eval(&v, &w).unwrap();
        let oracle = k_reference(&p, &v, &w);
        prop_assert!((k - oracle).abs() <= 1e-9 * oracle.max(1e-300), "{k} vs {oracle}");
    }

    #[test]
    fn frequency_is_the_power_law(p in params(), v in velocity()) {
        prop_assert_eq!(p.nu(&v), p.nu0 * (1.0 + v.norm()).powf(p.gamma));
    }

    #[test]
    fn frequency_gradient_magnitude(p in params(), v in velocity()) {
        prop_assume!(v.norm() > 1e-6);
        let g = p.grad_nu(&v).unwrap();
        let expected = p.nu0 * p.gamma * (1.0 + v.norm()).powf(p.gamma - 1.0);
        prop_assert!((g.norm() - expected).abs() <= 1e-12 * expected.max(1e-300));
    }

    #[test]
    fn kernel_gradient_matches_differences(p in params(), v in velocity(), w in velocity()) {
        // away from the diagonal and from the |v| kink at the origin
        prop_assume!((v - w).norm() >= 0.1 && v.norm() >= 0.1);
        let g = p.grad_v_k(&v, &w).unwrap();
        let scale = g.norm();
        prop_assume!(scale > 1e-200);
        let h = 1e-5 * (v - w).norm().min(v.norm());
        let mut fd = Vec3::zeros();
        for k in 0..3 {
            let e = Vec3::ith(k, h);
            fd[k] = (p.k_eval(&(v + e), &w).unwrap() - p.k_eval(&(v - e), &w).unwrap()) / (2.0 * h);
        }
        prop_assert!((g - fd).norm() <= 1e-6 * scale, "analytic {g:?} fd {fd:?}");
    }
}
