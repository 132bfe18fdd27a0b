//! Ray geometry of sphere and ellipsoid domains.
//!
//! Both shapes are handled as the affine image `c + A·B` of the unit ball
//! `B` with `A = diag(semi_axes)`. Backward exit times come from the exact
//! quadratic `|u − s w|² = 1` in the rescaled coordinates `u = A⁻¹(x − c)`,
//! `w = A⁻¹v`, so no iterative root finding is involved.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{fibonacci_sphere, unit_sphere_rule};
use crate::{Vec3, GRAZING_CUTOFF};

/// Points with level residual `|A⁻¹(x−c)|² − 1` above this are outside.
pub const BOUNDARY_TOL: f64 = 1e-9;
/// Level residual accepted by [`ConvexDomain::outward_normal`].
pub const NORMAL_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Sphere { radius: f64, center: [f64; 3] },
    Ellipsoid { semi_axes: [f64; 3], center: [f64; 3] },
}

/// A sphere or axis-aligned ellipsoid.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexDomain {
    shape: Shape,
    axes: Vec3,
    center: Vec3,
}

/// Backward characteristic data for a phase point `(x, v)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExitRecord {
    /// Backward exit time `τ`.
    pub tau: f64,
    /// Backward exit point `q = x − τ v`.
    pub q: Vec3,
    /// Outward unit normal at `q`.
    pub n_q: Vec3,
    /// Incidence factor `N = −n(q)·v/|v|`.
    pub incidence: f64,
}

impl ConvexDomain {
    pub fn new(shape: Shape) -> Result<Self> {
        let (axes, center) = match &shape {
            Shape::Sphere { radius, center } => (Vec3::repeat(*radius), Vec3::from(*center)),
            Shape::Ellipsoid { semi_axes, center } => {
                (Vec3::from(*semi_axes), Vec3::from(*center))
            }
        };
        if !axes.iter().all(|a| a.is_finite() && *a > 0.0) {
            return Err(Error::InvalidDomain(format!(
                "radii/semi-axes must be finite and strictly positive, got {:?}",
                axes.as_slice()
            )));
        }
        if !center.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidDomain("center must be finite".into()));
        }
        Ok(Self {
            shape,
            axes,
            center,
        })
    }

    pub fn sphere(radius: f64, center: [f64; 3]) -> Result<Self> {
        Self::new(Shape::Sphere { radius, center })
    }

    pub fn unit_ball() -> Self {
        Self::sphere(1.0, [0.0; 3]).expect("unit ball is valid")
    }

    pub fn ellipsoid(semi_axes: [f64; 3], center: [f64; 3]) -> Result<Self> {
        Self::new(Shape::Ellipsoid { semi_axes, center })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn semi_axes(&self) -> Vec3 {
        self.axes
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self.shape, Shape::Sphere { .. })
    }

    /// The domain `κ·Ω` (semi-axes and center multiplied by `κ`).
    pub fn scaled(&self, kappa: f64) -> Result<Self> {
        let c = (self.center * kappa).into();
        match &self.shape {
            Shape::Sphere { radius, .. } => Self::sphere(radius * kappa, c),
            Shape::Ellipsoid { semi_axes, .. } => Self::ellipsoid(
                [
                    semi_axes[0] * kappa,
                    semi_axes[1] * kappa,
                    semi_axes[2] * kappa,
                ],
                c,
            ),
        }
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.axes.max()
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.axes.product()
    }

    /// Surface area; closed form for spheres, a 96×192 product rule
    /// (spectrally accurate for the smooth area density) for ellipsoids.
    pub fn area(&self) -> f64 {
        match self.shape {
            Shape::Sphere { radius, .. } => 4.0 * PI * radius * radius,
            Shape::Ellipsoid { .. } => unit_sphere_rule(96, 192)
                .iter()
                .map(|(u, w)| w * self.area_density(u))
                .sum(),
        }
    }

    /// Surface-measure density of the map `u ↦ c + A u` from the unit sphere.
    pub fn area_density(&self, u: &Vec3) -> f64 {
        self.axes.product() * u.component_div(&self.axes).norm()
    }

    pub fn to_unit(&self, x: &Vec3) -> Vec3 {
        (x - self.center).component_div(&self.axes)
    }

    pub fn from_unit(&self, u: &Vec3) -> Vec3 {
        self.center + u.component_mul(&self.axes)
    }

    /// Quadratic level function `|A⁻¹(x−c)|² − 1`: negative inside.
    pub fn level(&self, x: &Vec3) -> f64 {
        self.to_unit(x).norm_squared() - 1.0
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        self.level(x) <= BOUNDARY_TOL
    }

    /// Normal direction of the level set through `z`, without a boundary check.
    pub fn normal_at(&self, z: &Vec3) -> Vec3 {
        let g = (z - self.center).component_div(&self.axes.component_mul(&self.axes));
        g.normalize()
    }

    pub fn outward_normal(&self, z: &Vec3) -> Result<Vec3> {
        let residual = self.level(z);
        if residual.abs() > NORMAL_TOL {
            return Err(Error::NotOnBoundary { residual });
        }
        Ok(self.normal_at(z))
    }

    /// Backward exit time and point of the characteristic through `(x, v)`.
    pub fn backward_exit(&self, x: &Vec3, v: &Vec3) -> Result<ExitRecord> {
        let speed = v.norm();
        if speed == 0.0 {
            return Err(Error::ZeroVelocity);
        }
        let u = self.to_unit(x);
        let w = v.component_div(&self.axes);
        let c = u.norm_squared() - 1.0;
        if c > BOUNDARY_TOL {
            return Err(Error::OutsideDomain(x.x, x.y, x.z));
        }
        let c = c.min(0.0);
        let a = w.norm_squared();
        let b = u.dot(&w);
        let disc = (b * b - a * c).sqrt();
        // positive root of a s² − 2 b s + c = 0, cancellation-free on both branches
        let tau = if b >= 0.0 {
            (b + disc) / a
        } else {
            c / (b - disc)
        };
        let q = x - tau * v;
        let n_q = self.normal_at(&q);
        let incidence = (-n_q.dot(v) / speed).max(0.0);
        Ok(ExitRecord {
            tau,
            q,
            n_q,
            incidence,
        })
    }

    /// `∇ₓτ = −n(q)/(N |v|)`.
    pub fn grad_x_tau(&self, x: &Vec3, v: &Vec3) -> Result<Vec3> {
        let rec = self.backward_exit(x, v)?;
        if rec.incidence <= GRAZING_CUTOFF {
            return Err(Error::GrazingRay {
                incidence: rec.incidence,
            });
        }
        Ok(-rec.n_q / (rec.incidence * v.norm()))
    }

    /// Upper bound `|x − q| / (|v|² N)` on `|∇ᵥτ|`.
    pub fn grad_v_tau_bound(&self, x: &Vec3, v: &Vec3) -> Result<f64> {
        let rec = self.backward_exit(x, v)?;
        if rec.tau == 0.0 {
            return Ok(0.0);
        }
        if rec.incidence <= GRAZING_CUTOFF {
            return Err(Error::GrazingRay {
                incidence: rec.incidence,
            });
        }
        Ok((x - rec.q).norm() / (v.norm_squared() * rec.incidence))
    }

    /// `|z − q(z,v)| / N(z,v)` for a boundary point `z`, or `None` when the
    /// pair is incoming (empty chord) or grazing.
    pub fn chord_incidence_ratio(&self, z: &Vec3, v: &Vec3) -> Option<f64> {
        self.chord_and_incidence(z, v).map(|(chord, n)| chord / n)
    }

    /// `(|z − q(z,v)|, N(z,v))`, with the same `None` cases as
    /// [`chord_incidence_ratio`](Self::chord_incidence_ratio).
    pub fn chord_and_incidence(&self, z: &Vec3, v: &Vec3) -> Option<(f64, f64)> {
        // project onto the boundary so the chord root is exactly 2b/a: with
        // a roundoff-sized level the general root loses accuracy near grazing
        let u = self.to_unit(z).normalize();
        let w = v.component_div(&self.axes);
        let b = u.dot(&w);
        if b <= 0.0 {
            return None;
        }
        let tau = 2.0 * b / w.norm_squared();
        let z = self.from_unit(&u);
        let q = z - tau * v;
        let incidence = -self.normal_at(&q).dot(v) / v.norm();
        if incidence <= GRAZING_CUTOFF {
            return None;
        }
        Some((tau * v.norm(), incidence))
    }

    /// Constant `C(Ω)` with `|z − q(z,v)| ≤ C(Ω) N(z,v)` on `∂Ω × S²`.
    ///
    /// Exactly `2R` for a sphere. For an ellipsoid this is an estimate: the
    /// supremum over a deterministic `√samples × √samples` lattice of
    /// boundary points and directions, polished by a pattern search started
    /// from the best lattice pairs.
    pub fn curvature_constant(&self, samples: usize) -> f64 {
        if let Shape::Sphere { radius, .. } = self.shape {
            return 2.0 * radius;
        }
        let n = ((samples.max(1) as f64).sqrt().ceil() as usize).max(2);
        let points = fibonacci_sphere(n);
        let dirs = fibonacci_sphere(n);
        let mut best: Vec<(f64, [f64; 4])> = Vec::new();
        for u in &points {
            let z = self.from_unit(u);
            for d in &dirs {
                if let Some(r) = self.chord_incidence_ratio(&z, d) {
                    best.push((r, [u.z.acos(), u.y.atan2(u.x), d.z.acos(), d.y.atan2(d.x)]));
                }
            }
        }
        best.sort_by(|a, b| b.0.total_cmp(&a.0));
        best.truncate(8);
        let objective = |p: &[f64; 4]| -> f64 {
            let u = spherical(p[0], p[1]);
            let d = spherical(p[2], p[3]);
            self.chord_incidence_ratio(&self.from_unit(&u), &d)
                .unwrap_or(0.0)
        };
        best.iter()
            .map(|(r0, p0)| pattern_search(&objective, *p0, *r0, 0.05, 1e-7))
            .fold(0.0, f64::max)
    }
}

fn spherical(theta: f64, phi: f64) -> Vec3 {
    Vec3::new(
        theta.sin() * phi.cos(),
        theta.sin() * phi.sin(),
        theta.cos(),
    )
}

/// Compass search maximizing `f`; step halves whenever no coordinate move
/// improves.
fn pattern_search(
    f: &dyn Fn(&[f64; 4]) -> f64,
    mut p: [f64; 4],
    mut val: f64,
    mut step: f64,
    min_step: f64,
) -> f64 {
    while step > min_step {
        let mut improved = false;
        for k in 0..4 {
            for sign in [1.0, -1.0] {
                let mut trial = p;
                trial[k] += sign * step;
                let t = f(&trial);
                if t > val {
                    val = t;
                    p = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    val
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v3(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn exit_along_axis() {
        let d = ConvexDomain::unit_ball();
        let r = d.backward_exit(&v3(0.5, 0.0, 0.0), &v3(1.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(r.tau, 1.5, max_relative = 1e-15);
        assert_relative_eq!(r.q, v3(-1.0, 0.0, 0.0), epsilon = 1e-15);
        assert_relative_eq!(r.incidence, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn exit_from_boundary_point() {
        // (1 − s)² + s² = 1 → s = 1
        let d = ConvexDomain::unit_ball();
        let r = d.backward_exit(&v3(1.0, 0.0, 0.0), &v3(1.0, 1.0, 0.0)).unwrap();
        assert_relative_eq!(r.tau, 1.0, max_relative = 1e-14);
        assert_relative_eq!(r.q, v3(0.0, -1.0, 0.0), epsilon = 1e-14);
        assert_relative_eq!(r.incidence, 1.0 / 2f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn incoming_boundary_point_has_empty_chord() {
        let d = ConvexDomain::unit_ball();
        let x = v3(1.0, 0.0, 0.0);
        let r = d.backward_exit(&x, &v3(-1.0, 0.0, 0.0)).unwrap();
        assert_eq!(r.tau, 0.0);
        assert_eq!(r.q, x);
    }

    #[test]
    fn exit_errors() {
        let d = ConvexDomain::unit_ball();
        assert!(matches!(
            d.backward_exit(&v3(0.1, 0.0, 0.0), &Vec3::zeros()),
            Err(Error::ZeroVelocity)
        ));
        assert!(matches!(
            d.backward_exit(&v3(1.1, 0.0, 0.0), &v3(1.0, 0.0, 0.0)),
            Err(Error::OutsideDomain(..))
        ));
    }

    #[test]
    fn normals() {
        let d = ConvexDomain::unit_ball();
        assert_relative_eq!(d.outward_normal(&v3(0.0, 0.0, 1.0)).unwrap(), v3(0.0, 0.0, 1.0));
        assert_relative_eq!(d.outward_normal(&v3(1.0, 0.0, 0.0)).unwrap(), v3(1.0, 0.0, 0.0));
        let e = ConvexDomain::ellipsoid([2.0, 1.0, 1.0], [0.0; 3]).unwrap();
        assert_relative_eq!(e.outward_normal(&v3(2.0, 0.0, 0.0)).unwrap(), v3(1.0, 0.0, 0.0));
        // gradient of x²/4 + y² + z² at (√2, √(1/2), 0) is (√2/2, √2, 0)
        let z = v3(2f64.sqrt(), 0.5f64.sqrt(), 0.0);
        let n = e.outward_normal(&z).unwrap();
        assert_relative_eq!(n, v3(1.0, 2.0, 0.0).normalize(), epsilon = 1e-14);
        assert!(matches!(
            d.outward_normal(&v3(0.5, 0.0, 0.0)),
            Err(Error::NotOnBoundary { .. })
        ));
    }

    #[test]
    fn tau_gradient_examples() {
        let d = ConvexDomain::unit_ball();
        let g = d.grad_x_tau(&v3(0.5, 0.0, 0.0), &v3(1.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(g, v3(1.0, 0.0, 0.0), epsilon = 1e-15);
        let g = d.grad_x_tau(&Vec3::zeros(), &v3(0.0, 0.0, 2.0)).unwrap();
        assert_relative_eq!(g, v3(0.0, 0.0, 0.5), epsilon = 1e-15);
        let b = d.grad_v_tau_bound(&v3(0.5, 0.0, 0.0), &v3(1.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(b, 1.5, max_relative = 1e-15);
        let b = d.grad_v_tau_bound(&Vec3::zeros(), &v3(0.0, 0.0, 2.0)).unwrap();
        assert_relative_eq!(b, 0.25, max_relative = 1e-15);
        let b = d.grad_v_tau_bound(&v3(1.0, 0.0, 0.0), &v3(-1.0, 0.0, 0.0)).unwrap();
        assert_eq!(b, 0.0);
    }

    #[test]
    fn grazing_rays_are_guarded() {
        let d = ConvexDomain::unit_ball();
        // tangent ray through a boundary point: q = x, N = 0
        let err = d.grad_x_tau(&v3(0.0, 0.0, 1.0), &v3(1.0, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::GrazingRay { .. }));
        let err = d.grad_v_tau_bound(&v3(0.0, 0.0, 1.0), &v3(1.0, 0.0, 0.0));
        assert!(matches!(err, Ok(0.0) | Err(Error::GrazingRay { .. })));
    }

    #[test]
    fn diameters_and_curvature_constants() {
        assert_eq!(ConvexDomain::unit_ball().diameter(), 2.0);
        let small = ConvexDomain::sphere(0.25, [0.0; 3]).unwrap();
        assert_eq!(small.diameter(), 0.5);
        let e = ConvexDomain::ellipsoid([2.0, 1.0, 1.0], [0.0; 3]).unwrap();
        assert_eq!(e.diameter(), 4.0);
        assert_eq!(ConvexDomain::unit_ball().curvature_constant(1000), 2.0);
        assert_eq!(small.curvature_constant(1000), 0.5);
    }

    #[test]
    fn ellipsoid_curvature_constant_is_bracketed_and_stable() {
        let e = ConvexDomain::ellipsoid([2.0, 1.0, 1.0], [0.0; 3]).unwrap();
        let c1 = e.curvature_constant(4000);
        let c2 = e.curvature_constant(8000);
        assert!((2.0..=8.0 + 1e-9).contains(&c1), "C = {c1}");
        assert!((c1 - c2).abs() / c2 < 0.02, "{c1} vs {c2}");
    }

    #[test]
    fn invalid_domains_rejected() {
        assert!(ConvexDomain::sphere(0.0, [0.0; 3]).is_err());
        assert!(ConvexDomain::ellipsoid([1.0, -1.0, 1.0], [0.0; 3]).is_err());
    }

    #[test]
    fn ellipsoid_area_matches_spheroid_closed_form() {
        // prolate spheroid a = 2 (polar), b = 1
        let e = ConvexDomain::ellipsoid([2.0, 1.0, 1.0], [0.0; 3]).unwrap();
        let ecc = (1.0f64 - 1.0 / 4.0).sqrt();
        let exact = 2.0 * PI * (1.0 + 2.0 * ecc.asin() / ecc);
        assert_relative_eq!(e.area(), exact, max_relative = 1e-10);
    }
}
