//! Model collision kernel and collision frequency.
//!
//! The kernel is chosen equal to its admissible majorant,
//!
//! ```text
//! k(v, v*) = A · |v − v*|⁻¹ · (1 + |v| + |v*|)^(γ−1)
//!              · exp(−(1−ρ)/4 · (|v − v*|² + E²)),   E = (|v|² − |v*|²)/|v − v*|
//! ```
//!
//! and `ν(v) = ν₀ (1 + |v|)^γ`, so every growth/decay bound on `k` and `ν`
//! is attained with constant `A` (resp. `ν₀`). The relative-energy term is
//! evaluated as `((v − v*)·(v + v*)) / |v − v*|`, which is free of the
//! cancellation in `|v|² − |v*|²` and makes `k` exactly symmetric in
//! floating point.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{composite_gauss_legendre, orthonormal_frame};
use crate::Vec3;

/// Separation below which two velocities count as coincident.
pub const COINCIDENT_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub rho: f64,
    pub gamma: f64,
    pub amplitude: f64,
    pub nu0: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            rho: 0.5,
            gamma: 1.0,
            amplitude: 0.2,
            nu0: 1.0,
        }
    }
}

impl KernelParams {
    pub fn new(rho: f64, gamma: f64, amplitude: f64, nu0: f64) -> Result<Self> {
        let p = Self {
            rho,
            gamma,
            amplitude,
            nu0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::ParameterRange(format!(
                "rho = {} must lie in (0, 1)",
                self.rho
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::ParameterRange(format!(
                "gamma = {} must lie in [0, 1]",
                self.gamma
            )));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::ParameterRange(format!(
                "amplitude = {} must be positive",
                self.amplitude
            )));
        }
        if !(self.nu0 > 0.0 && self.nu0.is_finite()) {
            return Err(Error::ParameterRange(format!(
                "nu0 = {} must be positive",
                self.nu0
            )));
        }
        Ok(())
    }

    /// Gaussian rate `(1−ρ)/4`.
    pub fn decay(&self) -> f64 {
        0.25 * (1.0 - self.rho)
    }

    pub fn nu(&self, v: &Vec3) -> f64 {
        self.nu0 * (1.0 + v.norm()).powf(self.gamma)
    }

    pub fn grad_nu(&self, v: &Vec3) -> Result<Vec3> {
        if self.gamma == 0.0 {
            return Ok(Vec3::zeros());
        }
        let s = v.norm();
        if s == 0.0 {
            return Err(Error::ZeroVelocity);
        }
        Ok(v * (self.nu0 * self.gamma * (1.0 + s).powf(self.gamma - 1.0) / s))
    }

    pub fn k_eval(&self, v: &Vec3, vstar: &Vec3) -> Result<f64> {
        let w = v - vstar;
        let r = w.norm();
        if r < COINCIDENT_TOL {
            return Err(Error::CoincidentVelocities);
        }
        Ok(self.k_unchecked(v, vstar))
    }

    pub(crate) fn k_unchecked(&self, v: &Vec3, vstar: &Vec3) -> f64 {
        let w = v - vstar;
        let r = w.norm();
        let energy = w.dot(&(v + vstar)) / r;
        self.amplitude / r
            * self.prefactor(v, vstar)
            * (-self.decay() * (r * r + energy * energy)).exp()
    }

    fn prefactor(&self, v: &Vec3, vstar: &Vec3) -> f64 {
        (1.0 + (v.norm() + vstar.norm())).powf(self.gamma - 1.0)
    }

    /// Contribution `≈ ∫_cell k(v, v') dv'` of a velocity cell of volume
    /// `cell_volume` centred at `vstar`.
    ///
    /// Away from the cell this is `cell_volume · k(v, vstar)`. Inside the
    /// equal-volume ball of radius `R` the `|v − v'|⁻¹` singularity is
    /// integrated exactly over the ball, `2π(R² − δ²/3)`, and multiplied by
    /// the smooth part of the kernel; the two branches match in value and
    /// slope at `δ = R`. The direction-dependent energy factor is blended
    /// towards its spherical mean as `δ → 0`, where it has no limit.
    pub fn k_cell(&self, v: &Vec3, vstar: &Vec3, cell_volume: f64) -> f64 {
        let radius = (3.0 * cell_volume / (4.0 * PI)).cbrt();
        let w = v - vstar;
        let delta = w.norm();
        if delta >= radius {
            return cell_volume * self.k_unchecked(v, vstar);
        }
        let c = self.decay();
        let t = (delta / radius).powi(2);
        let mean = energy_factor_mean(c, (v + vstar).norm());
        let directional = if delta > 0.0 {
            let e = w.dot(&(v + vstar)) / delta;
            (-c * e * e).exp()
        } else {
            0.0
        };
        let smooth = self.amplitude
            * self.prefactor(v, vstar)
            * (-c * delta * delta).exp()
            * ((1.0 - t) * mean + t * directional);
        smooth * 2.0 * PI * (radius * radius - delta * delta / 3.0)
    }

    pub fn grad_v_k(&self, v: &Vec3, vstar: &Vec3) -> Result<Vec3> {
        let w = v - vstar;
        let r = w.norm();
        if r < COINCIDENT_TOL {
            return Err(Error::CoincidentVelocities);
        }
        Ok(self.grad_v_k_unchecked(v, vstar))
    }

    fn grad_v_k_unchecked(&self, v: &Vec3, vstar: &Vec3) -> Vec3 {
        let w = v - vstar;
        let r = w.norm();
        let c = self.decay();
        let k = self.k_unchecked(v, vstar);
        let speed = v.norm();
        let vhat = if speed > 0.0 { v / speed } else { Vec3::zeros() };
        let base = 1.0 + (speed + vstar.norm());
        // ∇ log of each factor
        let d_inv_r = -w / (r * r);
        let d_pref = vhat * ((self.gamma - 1.0) / base);
        let energy = w.dot(&(v + vstar)) / r;
        let d_energy = v * (2.0 / r) - w * (energy / (r * r));
        let d_exp = -(w * 2.0 + d_energy * (2.0 * energy)) * c;
        (d_inv_r + d_pref + d_exp) * k
    }
}

/// Mean over directions `ŝ` of `exp(−c (m ŝ·e)²)`: `∫₀¹ exp(−c m² x²) dx`.
fn energy_factor_mean(c: f64, m: f64) -> f64 {
    let a = m * c.sqrt();
    if a < 1e-8 {
        1.0 - a * a / 3.0
    } else {
        0.5 * PI.sqrt() * libm::erf(a) / a
    }
}

/// Quadrature for the velocity-space probes.
///
/// Integrals are taken in polar coordinates centred on the singular point,
/// with the polar axis along the symmetry axis of the integrand, so they
/// reduce to `(r, cos θ)` integrals. The radial variable is `r = R t²`,
/// which removes the `r^(2−μ)` endpoint singularity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeQuadrature {
    pub n_radial: usize,
    pub n_angular: usize,
    pub panels: usize,
    /// Truncation radius around each singular point.
    pub radius: f64,
}

impl Default for ProbeQuadrature {
    fn default() -> Self {
        Self {
            n_radial: 16,
            n_angular: 16,
            panels: 4,
            radius: 12.0,
        }
    }
}

impl ProbeQuadrature {
    /// Twice the nodes per panel and twice the truncation radius.
    pub fn refined(&self) -> Self {
        Self {
            n_radial: 2 * self.n_radial,
            n_angular: 2 * self.n_angular,
            panels: self.panels,
            radius: 2.0 * self.radius,
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "polar {}x{} panels of {}x{} Gauss-Legendre nodes, radius {}",
            self.panels, self.panels, self.n_radial, self.n_angular, self.radius
        )
    }

    /// `∫_{|w| ≤ radius} F(center + w) dw` for `F` axisymmetric about the
    /// line through `center` along `axis`.
    pub fn integrate_axisymmetric(
        &self,
        center: &Vec3,
        axis: &Vec3,
        radius: f64,
        f: impl Fn(&Vec3) -> f64,
    ) -> f64 {
        let axis = if axis.norm() > 0.0 {
            axis.normalize()
        } else {
            Vec3::z()
        };
        let (perp, _) = orthonormal_frame(&axis);
        let radial = composite_gauss_legendre(self.n_radial, self.panels, 0.0, 1.0);
        let angular = composite_gauss_legendre(self.n_angular, self.panels, -1.0, 1.0);
        let mut total = 0.0;
        for (t, wt) in radial.iter() {
            let r = radius * t * t;
            let jac = 2.0 * radius * t * r * r;
            let mut ring = 0.0;
            for (x, wx) in angular.iter() {
                let s = (1.0 - x * x).max(0.0).sqrt();
                let p = center + (axis * x + perp * s) * r;
                ring += wx * f(&p);
            }
            total += wt * jac * ring;
        }
        2.0 * PI * total
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelMomentProbe {
    pub mu1: f64,
    pub mu2: f64,
    pub sup_estimate: f64,
    /// `(|v*|, ∫ |v|^{-μ₁} |k(v,v*)|^{μ₂} dv)` per probe point.
    pub per_probe: Vec<(f64, f64)>,
    pub sample_grid: String,
}

/// `sup_{v*} ∫ |v|^{−μ₁} |k(v,v*)|^{μ₂} dv` over the probe points.
///
/// The two point singularities (`v = 0` and `v = v*`) are separated by the
/// partition of unity `|v−v*|⁴/(|v|⁴+|v−v*|⁴)` and each piece is integrated
/// in polar coordinates around its own singular point.
pub fn kernel_moment(
    params: &KernelParams,
    mu1: f64,
    mu2: f64,
    probe_vstars: &[Vec3],
    quad: &ProbeQuadrature,
) -> Result<KernelMomentProbe> {
    if mu1 < 0.0 || mu2 <= 0.0 || mu1 + mu2 >= 3.0 {
        return Err(Error::ParameterRange(format!(
            "kernel moment needs mu1 >= 0, mu2 > 0, mu1 + mu2 < 3 (got {mu1}, {mu2})"
        )));
    }
    let integrand = |v: &Vec3, vstar: &Vec3| -> f64 {
        let speed = v.norm();
        let r = (v - vstar).norm();
        if speed == 0.0 || r == 0.0 {
            return 0.0;
        }
        speed.powf(-mu1) * params.k_unchecked(v, vstar).powf(mu2)
    };
    let mut per_probe = Vec::with_capacity(probe_vstars.len());
    for vstar in probe_vstars {
        let m = vstar.norm();
        let value = if m < 1e-12 {
            quad.integrate_axisymmetric(&Vec3::zeros(), &Vec3::z(), quad.radius, |v| {
                integrand(v, vstar)
            })
        } else {
            let weight_origin = |v: &Vec3| {
                let a = v.norm().powi(4);
                let b = (v - vstar).norm().powi(4);
                b / (a + b)
            };
            let near_origin = quad.integrate_axisymmetric(
                &Vec3::zeros(),
                vstar,
                m + quad.radius,
                |v| integrand(v, vstar) * weight_origin(v),
            );
            let near_vstar = quad.integrate_axisymmetric(vstar, vstar, quad.radius, |v| {
                integrand(v, vstar) * (1.0 - weight_origin(v))
            });
            near_origin + near_vstar
        };
        per_probe.push((m, value));
    }
    let sup_estimate = per_probe.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(KernelMomentProbe {
        mu1,
        mu2,
        sup_estimate,
        per_probe,
        sample_grid: quad.describe(),
    })
}

/// For each `|v|`, `(|v|, (1+|v|) ∫ |v−v*|^{−μ} exp(−(1−ρ)/4 (|v−v*|² + E²)) dv*)`.
pub fn caflisch_decay_probe(
    params: &KernelParams,
    mu: f64,
    v_magnitudes: &[f64],
    quad: &ProbeQuadrature,
) -> Result<Vec<(f64, f64)>> {
    if !(mu > 0.0 && mu < 3.0) {
        return Err(Error::ParameterRange(format!(
            "decay probe needs 0 < mu < 3 (got {mu})"
        )));
    }
    let c = params.decay();
    Ok(v_magnitudes
        .iter()
        .map(|&m| {
            let v = Vec3::z() * m;
            let integral = quad.integrate_axisymmetric(&v, &Vec3::z(), quad.radius, |vstar| {
                let w = v - vstar;
                let r = w.norm();
                if r == 0.0 {
                    return 0.0;
                }
                let e = w.dot(&(v + vstar)) / r;
                r.powf(-mu) * (-c * (r * r + e * e)).exp()
            });
            (m, integral * (1.0 + m))
        })
        .collect())
}

/// For each `|v|`, `(|v|, ∫ |∇ᵥk(v,v*)|^μ dv* / (1+|v|)^{μ−1})`.
pub fn grad_k_moment(
    params: &KernelParams,
    mu: f64,
    v_magnitudes: &[f64],
    quad: &ProbeQuadrature,
) -> Result<Vec<(f64, f64)>> {
    if !(mu > 0.0 && mu < 1.5) {
        return Err(Error::ParameterRange(format!(
            "gradient moment needs 0 < mu < 3/2 (got {mu})"
        )));
    }
    Ok(v_magnitudes
        .iter()
        .map(|&m| {
            let v = Vec3::z() * m;
            let integral = quad.integrate_axisymmetric(&v, &Vec3::z(), quad.radius, |vstar| {
                if (v - vstar).norm() == 0.0 {
                    return 0.0;
                }
                params.grad_v_k_unchecked(&v, vstar).norm().powf(mu)
            });
            (m, integral / (1.0 + m).powf(mu - 1.0))
        })
        .collect())
}

/// Sampled supremum of `|∇ᵥk| |v−v*|² / ((1+|v|) (1+|v|+|v*|)^{γ−1} e^{−(1−ρ)/4(|v−v*|²+E²)})`
/// over random pairs in the ball `|v|, |v*| ≤ v_max` with `|v − v*| ≥ min_separation`.
pub fn gradient_bound_constant(
    params: &KernelParams,
    pairs: usize,
    v_max: f64,
    min_separation: f64,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ball = || loop {
        let p = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if p.norm_squared() <= 1.0 {
            return p * v_max;
        }
    };
    let c = params.decay();
    let mut sup: f64 = 0.0;
    let mut taken = 0;
    while taken < pairs {
        let v = ball();
        let vstar = ball();
        let w = v - vstar;
        let r = w.norm();
        if r < min_separation {
            continue;
        }
        taken += 1;
        let e = w.dot(&(v + vstar)) / r;
        let majorant = (1.0 + v.norm()) / (r * r)
            * params.prefactor(&v, &vstar)
            * (-c * (r * r + e * e)).exp();
        if majorant > 0.0 {
            sup = sup.max(params.grad_v_k_unchecked(&v, &vstar).norm() / majorant);
        }
    }
    sup
}
