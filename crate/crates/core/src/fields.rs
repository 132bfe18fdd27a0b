//! Smooth test fields: seeded random trial fields and a manufactured field.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::geometry::ConvexDomain;
use crate::grids::Field;
use crate::Vec3;

/// Number of Fourier–Hermite modes in a random trial field.
pub const TRIAL_MODES: usize = 4;

/// `exp(1 − 1/(1 − t²))` for `t < 1`, zero beyond: smooth, compactly supported.
fn bump(t: f64) -> f64 {
    if t >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

/// Probabilists' Hermite polynomial of degree `n ≤ 2`.
fn hermite(n: u8, x: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => x,
        _ => x * x - 1.0,
    }
}

#[derive(Clone, Copy, Debug)]
struct Mode {
    coef: f64,
    wave: Vec3,
    phase: f64,
    degrees: [u8; 3],
}

/// A random `C^∞` field
///
/// ```text
/// h(x, v) = e^{−|v|²/8} bump(|v|/V) Σ_m c_m cos(a_m·x̂ + φ_m) He_m(v/2)
/// ```
///
/// with `x̂` the point in the coordinates where the domain is the unit
/// ball, so the same draws give the same shape on every rescaled domain.
/// The velocity envelope is wide enough that `h²` is resolved by the
/// default velocity rule.
pub fn random_smooth_field<R: Rng>(domain: &ConvexDomain, v_max: f64, rng: &mut R) -> Field {
    let modes: Vec<Mode> = (0..TRIAL_MODES)
        .map(|_| Mode {
            coef: rng.sample(StandardNormal),
            wave: Vec3::new(
                rng.random_range(-PI..PI),
                rng.random_range(-PI..PI),
                rng.random_range(-PI..PI),
            ),
            phase: rng.random_range(0.0..2.0 * PI),
            degrees: [
                rng.random_range(0..3u8),
                rng.random_range(0..3u8),
                rng.random_range(0..3u8),
            ],
        })
        .collect();
    let domain = domain.clone();
    Field::from_fn(move |x, v| {
        let envelope = bump(v.norm() / v_max);
        if envelope == 0.0 {
            return 0.0;
        }
        let u = domain.to_unit(x);
        let sum: f64 = modes
            .iter()
            .map(|m| {
                m.coef
                    * (m.wave.dot(&u) + m.phase).cos()
                    * hermite(m.degrees[0], 0.5 * v.x)
                    * hermite(m.degrees[1], 0.5 * v.y)
                    * hermite(m.degrees[2], 0.5 * v.z)
            })
            .sum();
        (-0.125 * v.norm_squared()).exp() * envelope * sum
    })
}

/// `(1 + x̂₁/2 + x̂₂²/4) e^{−|v|²/8}` in unit-ball coordinates.
pub fn manufactured_field(domain: &ConvexDomain) -> Field {
    let domain = domain.clone();
    Field::from_fn(move |x, v| {
        let u = domain.to_unit(x);
        (1.0 + 0.5 * u.x + 0.25 * u.y * u.y) * (-0.125 * v.norm_squared()).exp()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trial_fields_are_seeded_and_supported_in_the_ball() {
        let d = ConvexDomain::unit_ball();
        let f = random_smooth_field(&d, 6.0, &mut ChaCha8Rng::seed_from_u64(3));
        let g = random_smooth_field(&d, 6.0, &mut ChaCha8Rng::seed_from_u64(3));
        let h = random_smooth_field(&d, 6.0, &mut ChaCha8Rng::seed_from_u64(4));
        let x = Vec3::new(0.1, 0.2, -0.3);
        let v = Vec3::new(0.5, -0.4, 1.0);
        assert_eq!(f.eval(&x, &v).unwrap(), g.eval(&x, &v).unwrap());
        assert_ne!(f.eval(&x, &v).unwrap(), h.eval(&x, &v).unwrap());
        assert_eq!(f.eval(&x, &Vec3::new(6.0, 0.1, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn manufactured_field_value() {
        let d = ConvexDomain::sphere(0.5, [0.0; 3]).unwrap();
        let f = manufactured_field(&d);
        let val = f.eval(&Vec3::new(0.25, 0.5, 0.0), &Vec3::zeros()).unwrap();
        assert_eq!(val, 1.0 + 0.25 + 0.25);
    }
}
