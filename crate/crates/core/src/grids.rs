//! Phase-space grids, fields and norms.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ConvexDomain;
use crate::quadrature::{gauss_legendre, orthonormal_frame, unit_sphere_rule};
use crate::Vec3;

static NEXT_GRID_ID: AtomicU64 = AtomicU64::new(1);

/// Node counts of a [`PhaseGrid`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridResolution {
    pub n_r: usize,
    pub n_theta: usize,
    pub n_phi: usize,
    /// Velocity nodes per axis; must be even so that `v = 0` is not a node.
    pub n_v: usize,
}

impl Default for GridResolution {
    fn default() -> Self {
        Self {
            n_r: 8,
            n_theta: 8,
            n_phi: 16,
            n_v: 8,
        }
    }
}

impl GridResolution {
    pub fn new(n_r: usize, n_theta: usize, n_phi: usize, n_v: usize) -> Self {
        Self {
            n_r,
            n_theta,
            n_phi,
            n_v,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("n_r", self.n_r),
            ("n_theta", self.n_theta),
            ("n_phi", self.n_phi),
            ("n_v", self.n_v),
        ] {
            if n < 2 {
                return Err(Error::BadResolution(format!("{name} = {n} must be at least 2")));
            }
        }
        if self.n_v % 2 != 0 {
            return Err(Error::BadResolution(format!(
                "n_v = {} must be even (no node at v = 0)",
                self.n_v
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    L2,
    H1,
    TraceL2,
}

/// Quadrature nodes for `Ω × [−V, V]³` and `∂Ω × [−V, V]³`.
#[derive(Clone, Debug)]
pub struct PhaseGrid {
    id: u64,
    pub resolution: GridResolution,
    pub v_max: f64,
    pub space_nodes: Vec<Vec3>,
    pub space_weights: Vec<f64>,
    pub boundary_nodes: Vec<Vec3>,
    pub boundary_normals: Vec<Vec3>,
    pub boundary_weights: Vec<f64>,
    pub velocity_nodes: Vec<Vec3>,
    pub velocity_weights: Vec<f64>,
    /// Finite-difference steps `(h_x, h_v)`.
    pub fd_steps: (f64, f64),
    domain: ConvexDomain,
}

impl PhaseGrid {
    pub fn build(domain: &ConvexDomain, res: GridResolution, v_max: f64) -> Result<Self> {
        res.validate()?;
        if !(v_max > 0.0 && v_max.is_finite()) {
            return Err(Error::BadResolution(format!("v_max = {v_max} must be positive")));
        }
        let jac = domain.semi_axes().product();
        let radial = gauss_legendre(res.n_r, 0.0, 1.0);
        let polar = gauss_legendre(res.n_theta, -1.0, 1.0);
        let dphi = 2.0 * PI / res.n_phi as f64;
        let mut space_nodes = Vec::with_capacity(res.n_r * res.n_theta * res.n_phi);
        let mut space_weights = Vec::with_capacity(space_nodes.capacity());
        for (r, wr) in radial.iter() {
            for (ct, wt) in polar.iter() {
                let st = (1.0 - ct * ct).max(0.0).sqrt();
                for k in 0..res.n_phi {
                    let phi = (k as f64 + 0.5) * dphi;
                    let u = Vec3::new(st * phi.cos(), st * phi.sin(), ct) * r;
                    space_nodes.push(domain.from_unit(&u));
                    space_weights.push(wr * r * r * wt * dphi * jac);
                }
            }
        }

        let mut boundary_nodes = Vec::new();
        let mut boundary_normals = Vec::new();
        let mut boundary_weights = Vec::new();
        for (u, w) in unit_sphere_rule(res.n_theta, res.n_phi) {
            let z = domain.from_unit(&u);
            boundary_normals.push(domain.normal_at(&z));
            boundary_nodes.push(z);
            boundary_weights.push(w * domain.area_density(&u));
        }

        let axis = gauss_legendre(res.n_v, -v_max, v_max);
        let mut velocity_nodes = Vec::with_capacity(res.n_v.pow(3));
        let mut velocity_weights = Vec::with_capacity(res.n_v.pow(3));
        for (a, wa) in axis.iter() {
            for (b, wb) in axis.iter() {
                for (c, wc) in axis.iter() {
                    velocity_nodes.push(Vec3::new(a, b, c));
                    velocity_weights.push(wa * wb * wc);
                }
            }
        }

        Ok(Self {
            id: NEXT_GRID_ID.fetch_add(1, Ordering::Relaxed),
            resolution: res,
            v_max,
            space_nodes,
            space_weights,
            boundary_nodes,
            boundary_normals,
            boundary_weights,
            velocity_nodes,
            velocity_weights,
            fd_steps: (1e-4 * domain.diameter(), 1e-3),
            domain: domain.clone(),
        })
    }

    /// Same spatial and boundary rules, velocities on the ball `|v| ≤ V`
    /// instead of the cube: Gauss–Legendre in speed and polar cosine,
    /// uniform in azimuth. Gets its own id, so samples memoized on `self`
    /// are not reused.
    pub fn with_ball_velocities(&self, n_speed: usize, n_polar: usize, n_azimuth: usize) -> Result<Self> {
        if n_speed == 0 || n_polar == 0 || n_azimuth == 0 {
            return Err(Error::BadResolution(format!(
                "ball velocity rule ({n_speed}, {n_polar}, {n_azimuth}) needs positive counts"
            )));
        }
        let speeds = gauss_legendre(n_speed, 0.0, self.v_max);
        let polar = gauss_legendre(n_polar, -1.0, 1.0);
        let dphi = 2.0 * PI / n_azimuth as f64;
        let mut velocity_nodes = Vec::with_capacity(n_speed * n_polar * n_azimuth);
        let mut velocity_weights = Vec::with_capacity(velocity_nodes.capacity());
        for (s, ws) in speeds.iter() {
            for (ct, wt) in polar.iter() {
                let st = (1.0 - ct * ct).max(0.0).sqrt();
                for k in 0..n_azimuth {
                    let phi = (k as f64 + 0.5) * dphi;
                    velocity_nodes.push(Vec3::new(st * phi.cos(), st * phi.sin(), ct) * s);
                    velocity_weights.push(ws * s * s * wt * dphi);
                }
            }
        }
        Ok(Self {
            id: NEXT_GRID_ID.fetch_add(1, Ordering::Relaxed),
            velocity_nodes,
            velocity_weights,
            ..self.clone()
        })
    }

    /// Identifier used to match memoized samples to this grid.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn domain(&self) -> &ConvexDomain {
        &self.domain
    }

    pub fn n_space(&self) -> usize {
        self.space_nodes.len()
    }

    pub fn n_velocity(&self) -> usize {
        self.velocity_nodes.len()
    }

    pub fn n_phase(&self) -> usize {
        self.n_space() * self.n_velocity()
    }

    /// Values of `f` at the phase nodes, index `a · n_velocity + i` for
    /// spatial node `a` and velocity node `i`.
    pub fn sample(&self, f: &Field) -> Result<Vec<f64>> {
        if let Some(c) = &f.cache {
            if c.grid_id == self.id {
                return Ok(c.values.as_ref().clone());
            }
        }
        self.sample_at(&self.space_nodes, f)
    }

    fn sample_at(&self, points: &[Vec3], f: &Field) -> Result<Vec<f64>> {
        let rows: Vec<Vec<f64>> = points
            .par_iter()
            .map(|x| {
                self.velocity_nodes
                    .iter()
                    .map(|v| f.eval(x, v))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        Ok(rows.concat())
    }

    /// Values of `f` at boundary nodes (inside limit), index `b · n_velocity + i`.
    pub fn restrict_to_boundary(&self, f: &Field) -> Result<Vec<f64>> {
        self.sample_at(&self.boundary_nodes, f)
    }

    pub fn l2_from_samples(&self, values: &[f64]) -> f64 {
        weighted_sq(values, &self.space_weights, &self.velocity_weights).sqrt()
    }

    pub fn trace_l2_from_samples(&self, values: &[f64]) -> f64 {
        weighted_sq(values, &self.boundary_weights, &self.velocity_weights).sqrt()
    }

    pub fn norm(&self, f: &Field, kind: NormKind) -> Result<f64> {
        match kind {
            NormKind::L2 => Ok(self.l2_from_samples(&self.sample(f)?)),
            NormKind::TraceL2 => Ok(self.trace_l2_from_samples(&self.restrict_to_boundary(f)?)),
            NormKind::H1 => Ok(self.h1_parts(f)?.h1()),
        }
    }

    /// Squared `L²` norms of `f`, `∇ₓf` and `∇ᵥf` by finite differences of
    /// the evaluator.
    pub fn h1_parts(&self, f: &Field) -> Result<H1Parts> {
        let values = self.sample(f)?;
        let (hx, hv) = self.fd_steps;
        let nv = self.n_velocity();
        let per_node: Vec<(f64, f64)> = self
            .space_nodes
            .par_iter()
            .enumerate()
            .map(|(a, x)| -> Result<(f64, f64)> {
                let mut gx = 0.0;
                let mut gv = 0.0;
                for (i, v) in self.velocity_nodes.iter().enumerate() {
                    let f0 = values[a * nv + i];
                    let wv = self.velocity_weights[i];
                    for k in 0..3 {
                        let dx = self.space_derivative(f, x, v, k, hx, f0)?;
                        let e = Vec3::ith(k, hv);
                        let dv = (f.eval(x, &(v + e))? - f.eval(x, &(v - e))?) / (2.0 * hv);
                        gx += wv * dx * dx;
                        gv += wv * dv * dv;
                    }
                }
                Ok((self.space_weights[a] * gx, self.space_weights[a] * gv))
            })
            .collect::<Result<_>>()?;
        Ok(H1Parts {
            value_sq: self.l2_from_samples(&values).powi(2),
            grad_x_sq: per_node.iter().map(|p| p.0).sum(),
            grad_v_sq: per_node.iter().map(|p| p.1).sum(),
        })
    }

    /// Central difference in `x_k`, one-sided second order when the
    /// central stencil leaves the domain.
    fn space_derivative(
        &self,
        f: &Field,
        x: &Vec3,
        v: &Vec3,
        k: usize,
        h: f64,
        f0: f64,
    ) -> Result<f64> {
        let e = Vec3::ith(k, h);
        let inside = |p: &Vec3| self.domain.level(p) <= 0.0;
        if inside(&(x + e)) && inside(&(x - e)) {
            return Ok((f.eval(&(x + e), v)? - f.eval(&(x - e), v)?) / (2.0 * h));
        }
        if inside(&(x + e * 2.0)) {
            let f1 = f.eval(&(x + e), v)?;
            let f2 = f.eval(&(x + e * 2.0), v)?;
            return Ok((-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h));
        }
        let f1 = f.eval(&(x - e), v)?;
        let f2 = f.eval(&(x - e * 2.0), v)?;
        Ok((3.0 * f0 - 4.0 * f1 + f2) / (2.0 * h))
    }
}

fn weighted_sq(values: &[f64], outer: &[f64], inner: &[f64]) -> f64 {
    let n = inner.len();
    outer
        .iter()
        .enumerate()
        .map(|(a, wa)| {
            let row = &values[a * n..(a + 1) * n];
            wa * row.iter().zip(inner).map(|(f, w)| w * f * f).sum::<f64>()
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct H1Parts {
    pub value_sq: f64,
    pub grad_x_sq: f64,
    pub grad_v_sq: f64,
}

impl H1Parts {
    pub fn h1(&self) -> f64 {
        (self.value_sq + self.grad_x_sq + self.grad_v_sq).sqrt()
    }
}

type Evaluator = dyn Fn(&Vec3, &Vec3) -> Result<f64> + Send + Sync;

struct Samples {
    grid_id: u64,
    values: Arc<Vec<f64>>,
}

/// A phase-space function `f(x, v)`: an evaluator plus, optionally, its
/// values at the nodes of one grid.
#[derive(Clone)]
pub struct Field {
    eval: Arc<Evaluator>,
    cache: Option<Arc<Samples>>,
}

impl std::fmt::Debug for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Field")
            .field("cached", &self.cache.as_ref().map(|c| c.grid_id))
            .finish()
    }
}

impl Field {
    pub fn new(f: impl Fn(&Vec3, &Vec3) -> Result<f64> + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(f),
            cache: None,
        }
    }

    pub fn from_fn(f: impl Fn(&Vec3, &Vec3) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(move |x, v| Ok(f(x, v)))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::from_fn(move |_, _| c)
    }

    pub fn eval(&self, x: &Vec3, v: &Vec3) -> Result<f64> {
        (self.eval)(x, v)
    }

    pub fn is_memoized_on(&self, grid: &PhaseGrid) -> bool {
        self.cache.as_ref().is_some_and(|c| c.grid_id == grid.id())
    }

    /// The same field with its phase-node values stored for `grid`.
    pub fn memoized(self, grid: &PhaseGrid) -> Result<Self> {
        if self.is_memoized_on(grid) {
            return Ok(self);
        }
        let values = grid.sample(&self)?;
        Ok(Self {
            eval: self.eval,
            cache: Some(Arc::new(Samples {
                grid_id: grid.id(),
                values: Arc::new(values),
            })),
        })
    }

    /// Attach phase-node values already computed with this evaluator.
    pub(crate) fn with_samples(self, grid: &PhaseGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_phase());
        Self {
            eval: self.eval,
            cache: Some(Arc::new(Samples {
                grid_id: grid.id(),
                values: Arc::new(values),
            })),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let f = self.clone();
        Self::new(move |x, v| Ok(c * f.eval(x, v)?))
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Field, b: f64) -> Self {
        let (f, g) = (self.clone(), other.clone());
        Self::new(move |x, v| Ok(a * f.eval(x, v)? + b * g.eval(x, v)?))
    }

    pub fn sub(&self, other: &Field) -> Self {
        self.combine(1.0, other, -1.0)
    }
}

/// One term `coef · z₁^i z₂^j z₃^k · exp(−a|v|²)` of tabulated boundary data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryTerm {
    pub coef: f64,
    pub a: f64,
    pub powers: [u32; 3],
}

impl BoundaryTerm {
    fn value(&self, z: &Vec3, v: &Vec3) -> f64 {
        self.coef * monomial(z, self.powers) * (-self.a * v.norm_squared()).exp()
    }

    fn grad_z(&self, z: &Vec3, v: &Vec3) -> Vec3 {
        let g = (-self.a * v.norm_squared()).exp() * self.coef;
        let mut out = Vec3::zeros();
        for k in 0..3 {
            let p = self.powers[k];
            if p > 0 {
                let mut q = self.powers;
                q[k] -= 1;
                out[k] = g * p as f64 * monomial(z, q);
            }
        }
        out
    }

    fn grad_v(&self, z: &Vec3, v: &Vec3) -> Vec3 {
        v * (-2.0 * self.a * self.value(z, v))
    }
}

fn monomial(z: &Vec3, p: [u32; 3]) -> f64 {
    z.x.powi(p[0] as i32) * z.y.powi(p[1] as i32) * z.z.powi(p[2] as i32)
}

#[derive(Clone)]
enum BoundaryRepr {
    Terms(Vec<BoundaryTerm>),
    Custom(Arc<dyn Fn(&Vec3, &Vec3) -> f64 + Send + Sync>),
}

/// Incoming boundary data `g(z, v)` on `Γ⁻ = {n(z)·v < 0}`.
#[derive(Clone)]
pub struct BoundaryData {
    repr: BoundaryRepr,
}

impl std::fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.repr {
            BoundaryRepr::Terms(t) => f.debug_tuple("BoundaryData").field(t).finish(),
            BoundaryRepr::Custom(_) => f.write_str("BoundaryData(custom)"),
        }
    }
}

impl BoundaryData {
    pub fn zero() -> Self {
        Self::from_terms(Vec::new())
    }

    /// `exp(−a|v|²)`.
    pub fn gaussian(a: f64) -> Self {
        Self::from_terms(vec![BoundaryTerm {
            coef: 1.0,
            a,
            powers: [0, 0, 0],
        }])
    }

    /// `z₁ exp(−a|v|²)`.
    pub fn gaussian_x1(a: f64) -> Self {
        Self::from_terms(vec![BoundaryTerm {
            coef: 1.0,
            a,
            powers: [1, 0, 0],
        }])
    }

    pub fn from_terms(terms: Vec<BoundaryTerm>) -> Self {
        Self {
            repr: BoundaryRepr::Terms(terms),
        }
    }

    pub fn custom(f: impl Fn(&Vec3, &Vec3) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            repr: BoundaryRepr::Custom(Arc::new(f)),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(&self.repr, BoundaryRepr::Terms(t) if t.iter().all(|t| t.coef == 0.0))
    }

    /// Smallest Gaussian rate among the terms, if tabulated.
    pub fn decay(&self) -> Option<f64> {
        match &self.repr {
            BoundaryRepr::Terms(t) => t.iter().map(|t| t.a).reduce(f64::min),
            BoundaryRepr::Custom(_) => None,
        }
    }

    /// Spatial Lipschitz constant over `Ω̄` (uniform in `v`), if tabulated.
    pub fn lipschitz(&self, domain: &ConvexDomain) -> Option<f64> {
        let BoundaryRepr::Terms(terms) = &self.repr else {
            return None;
        };
        let reach = domain.center().abs() + domain.semi_axes();
        Some(
            terms
                .iter()
                .map(|t| {
                    let mut grad_sq = 0.0;
                    for k in 0..3 {
                        let p = t.powers[k];
                        if p > 0 {
                            let mut q = t.powers;
                            q[k] -= 1;
                            grad_sq += (p as f64 * monomial(&reach, q)).powi(2);
                        }
                    }
                    t.coef.abs() * grad_sq.sqrt()
                })
                .sum(),
        )
    }

    /// `g(z, v)`; an error if `(z, v)` is strictly outgoing.
    pub fn eval(&self, domain: &ConvexDomain, z: &Vec3, v: &Vec3) -> Result<f64> {
        if domain.normal_at(z).dot(v) > 0.0 {
            return Err(Error::UndefinedOnGammaMinus);
        }
        Ok(self.value(z, v))
    }

    pub(crate) fn value(&self, z: &Vec3, v: &Vec3) -> f64 {
        match &self.repr {
            BoundaryRepr::Terms(t) => t.iter().map(|t| t.value(z, v)).sum(),
            BoundaryRepr::Custom(f) => f(z, v),
        }
    }

    /// Ambient gradients `(∇_z g, ∇_v g)`; analytic for tabulated data,
    /// central differences otherwise.
    pub fn gradients(&self, z: &Vec3, v: &Vec3) -> (Vec3, Vec3) {
        match &self.repr {
            BoundaryRepr::Terms(t) => t.iter().fold((Vec3::zeros(), Vec3::zeros()), |acc, t| {
                (acc.0 + t.grad_z(z, v), acc.1 + t.grad_v(z, v))
            }),
            BoundaryRepr::Custom(f) => {
                let h = 1e-6;
                let mut gz = Vec3::zeros();
                let mut gv = Vec3::zeros();
                for k in 0..3 {
                    let e = Vec3::ith(k, h);
                    gz[k] = (f(&(z + e), v) - f(&(z - e), v)) / (2.0 * h);
                    gv[k] = (f(z, &(v + e)) - f(z, &(v - e))) / (2.0 * h);
                }
                (gz, gv)
            }
        }
    }
}

/// Nodes on the incoming part `{z ∈ ∂Ω : n(z)·v < 0}` of the boundary for a
/// fixed velocity: `(z, n(z), area weight)`.
///
/// The hemisphere is taken about the velocity in the rescaled coordinates
/// where the domain is the unit ball, so the rule is exact in the sense
/// that no node straddles the grazing set.
pub fn incoming_boundary_rule(
    domain: &ConvexDomain,
    v: &Vec3,
    n_polar: usize,
    n_azimuth: usize,
) -> Vec<(Vec3, Vec3, f64)> {
    let axis = -v.component_div(&domain.semi_axes()).normalize();
    let (b1, b2) = orthonormal_frame(&axis);
    let polar = gauss_legendre(n_polar, 0.0, 1.0);
    let dphi = 2.0 * PI / n_azimuth as f64;
    let mut out = Vec::with_capacity(n_polar * n_azimuth);
    for (ct, wt) in polar.iter() {
        let st = (1.0 - ct * ct).max(0.0).sqrt();
        for k in 0..n_azimuth {
            let phi = (k as f64 + 0.5) * dphi;
            let u = axis * ct + (b1 * phi.cos() + b2 * phi.sin()) * st;
            let z = domain.from_unit(&u);
            out.push((z, domain.normal_at(&z), wt * dphi * domain.area_density(&u)));
        }
    }
    out
}
