use std::f64::consts::PI;

use lbe_core::fields::random_smooth_field;
use lbe_core::{ConvexDomain, Field, GridResolution, NormKind, PhaseGrid, Vec3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const KINDS: [NormKind; 3] = [NormKind::L2, NormKind::H1, NormKind::TraceL2];

fn grid() -> PhaseGrid {
    let d = ConvexDomain::sphere(0.5, [0.1, 0.0, 0.0]).unwrap();
    PhaseGrid::build(&d, GridResolution::new(3, 4, 6, 4), 5.0).unwrap()
}

fn trial(grid: &PhaseGrid, seed: u64) -> Field {
    random_smooth_field(grid.domain(), grid.v_max, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `(1 + x₁²) e^{−|v|²/2}` on the unit ball.
fn analytic() -> Field {
    Field::from_fn(|x, v| (1.0 + x.x * x.x) * (-v.norm_squared() / 2.0).exp())
}

/// Exact squared `L²` norm of [`analytic`] over the unit ball times `[−V, V]³`.
fn analytic_l2_sq(v_max: f64) -> f64 {
    let i0 = PI.sqrt() * libm::erf(v_max);
    208.0 * PI / 105.0 * i0.powi(3)
}

#[test]
fn l2_converges_fast_under_refinement() {
    let ball = ConvexDomain::unit_ball();
    let exact = analytic_l2_sq(4.0).sqrt();
    let err = |n_v| {
        let g = PhaseGrid::build(&ball, GridResolution::new(3, 3, 6, n_v), 4.0).unwrap();
        (g.norm(&analytic(), NormKind::L2).unwrap() - exact).abs() / exact
    };
    let (coarse, fine) = (err(6), err(12));
    let order = (coarse / fine).log2();
    assert!(fine < 1e-3 && order >= 2.0, "errors {coarse:e} {fine:e}");
}

#[test]
fn h1_matches_closed_form() {
    let v_max = 4.0;
    let i0 = PI.sqrt() * libm::erf(v_max);
    let i2 = i0 / 2.0 - v_max * (-v_max * v_max).exp();
    let value = analytic_l2_sq(v_max);
    let grad_x = 16.0 * PI / 15.0 * i0.powi(3);
    let grad_v = 208.0 * PI / 105.0 * 3.0 * i2 * i0 * i0;
    let exact = (value + grad_x + grad_v).sqrt();
    let g = PhaseGrid::build(&ConvexDomain::unit_ball(), GridResolution::new(4, 4, 8, 12), v_max)
        .unwrap();
    let h1 = g.norm(&analytic(), NormKind::H1).unwrap();
    assert!((h1 / exact - 1.0).abs() < 1e-3, "{h1} vs {exact}");
}

#[test]
fn trace_norm_of_constant_is_area_times_velocity_volume() {
    let g = grid();
    let t = g.norm(&Field::constant(1.0), NormKind::TraceL2).unwrap();
    let exact = (g.domain().area() * 1000.0).sqrt();
    assert!((t / exact - 1.0).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn norms_are_homogeneous(seed in any::<u64>(), c in -5.0..5.0f64) {
        let g = grid();
        let f = trial(&g, seed);
        for kind in KINDS {
            let base = g.norm(&f, kind).unwrap();
            let scaled = g.norm(&f.scaled(c), kind).unwrap();
            prop_assert!((scaled - c.abs() * base).abs() <= 1e-12 * base.max(1e-300) * c.abs().max(1.0));
        }
    }

    #[test]
    fn triangle_inequality(a in any::<u64>(), b in any::<u64>()) {
        let g = grid();
        let (f, h) = (trial(&g, a), trial(&g, b));
        let sum = f.combine(1.0, &h, 1.0);
        for kind in KINDS {
            let lhs = g.norm(&sum, kind).unwrap();
            let rhs = g.norm(&f, kind).unwrap() + g.norm(&h, kind).unwrap();
            prop_assert!(lhs <= rhs * (1.0 + 1e-12));
        }
    }

    #[test]
    fn h1_dominates_l2(seed in any::<u64>()) {
        let g = grid();
        let f = trial(&g, seed);
        prop_assert!(g.norm(&f, NormKind::H1).unwrap() >= g.norm(&f, NormKind::L2).unwrap());
    }

    #[test]
    fn memoization_does_not_change_norms(seed in any::<u64>()) {
        let g = grid();
        let f = trial(&g, seed);
        let m = f.clone().memoized(&g).unwrap();
        prop_assert!(m.is_memoized_on(&g));
        for kind in KINDS {
            prop_assert_eq!(g.norm(&f, kind).unwrap(), g.norm(&m, kind).unwrap());
        }
    }
}

#[test]
fn sampling_order_is_space_major() {
    let g = grid();
    let f = Field::from_fn(|x: &Vec3, v: &Vec3| x.x + 10.0 * v.y);
    let s = g.sample(&f).unwrap();
    let nv = g.n_velocity();
    for (a, x) in g.space_nodes.iter().enumerate().step_by(7) {
        for (i, v) in g.velocity_nodes.iter().enumerate().step_by(5) {
            assert_eq!(s[a * nv + i], x.x + 10.0 * v.y);
        }
    }
}
