//! The boundary transport `J`, the collision integral `K`, the damped path
//! integral `S` and the discrete `S K` used by the iterative solver.
//!
//! `apply_*` return exact pointwise compositions: every evaluation of
//! `apply_SK(f)` runs the full velocity quadrature at every line node. That
//! is the reference but far too slow to iterate with, so the solver works
//! with [`DiscreteSk`]: the argument is sampled once on a Cartesian lattice
//! covering the domain, `K` becomes a dense matrix product over velocity
//! nodes, and `S` integrates the trilinear interpolant of the result.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ConvexDomain;
use crate::grids::{BoundaryData, Field, GridResolution, PhaseGrid};
use crate::kernel::KernelParams;
use crate::quadrature::{gauss_legendre, Rule1d};
use crate::Vec3;

/// Gauss–Legendre rule along backward characteristics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineQuadrature {
    pub order: usize,
    /// Split `[0, τ]` at `s = 4/ν` when `ν τ > 4`.
    pub split: bool,
}

impl Default for LineQuadrature {
    fn default() -> Self {
        Self {
            order: 16,
            split: true,
        }
    }
}

/// Line rule on `[0, τ]` for damping rate `ν`, built from the unit rule.
fn line_nodes(unit: &Rule1d, split: bool, tau: f64, nu: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(2 * unit.len());
    let mut push = |a: f64, b: f64| {
        for (t, w) in unit.iter() {
            out.push((a + (b - a) * t, (b - a) * w));
        }
    };
    if split && nu * tau > 4.0 {
        let cut = 4.0 / nu;
        push(0.0, cut);
        push(cut, tau);
    } else {
        push(0.0, tau);
    }
    out
}

/// Regular lattice over the bounding box of the domain.
#[derive(Clone, Debug)]
struct Lattice {
    n: usize,
    lo: Vec3,
    inv_step: Vec3,
    /// Evaluation point of each node: the node itself if it lies in the
    /// closed domain, otherwise its radial projection onto the boundary.
    points: Vec<Vec3>,
}

impl Lattice {
    fn new(domain: &ConvexDomain, n: usize) -> Self {
        let half = domain.semi_axes();
        let lo = domain.center() - half;
        let step = half * (2.0 / (n - 1) as f64);
        let mut points = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let p = lo + step.component_mul(&Vec3::new(i as f64, j as f64, k as f64));
                    let u = domain.to_unit(&p);
                    let r = u.norm();
                    points.push(if r > 1.0 { domain.from_unit(&(u / r)) } else { p });
                }
            }
        }
        Self {
            n,
            lo,
            inv_step: step.map(|h| 1.0 / h),
            points,
        }
    }

    fn len(&self) -> usize {
        self.points.len()
    }

    /// Trilinear stencil `(node index, weight)` at `p`.
    fn stencil(&self, p: &Vec3) -> [(usize, f64); 8] {
        let n = self.n;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for k in 0..3 {
            let t = ((p[k] - self.lo[k]) * self.inv_step[k]).clamp(0.0, (n - 1) as f64);
            let i = (t.floor() as usize).min(n - 2);
            base[k] = i;
            frac[k] = t - i as f64;
        }
        let mut out = [(0usize, 0.0); 8];
        for (c, slot) in out.iter_mut().enumerate() {
            let (di, dj, dk) = (c >> 2 & 1, c >> 1 & 1, c & 1);
            let w = (if di == 1 { frac[0] } else { 1.0 - frac[0] })
                * (if dj == 1 { frac[1] } else { 1.0 - frac[1] })
                * (if dk == 1 { frac[2] } else { 1.0 - frac[2] });
            let idx = ((base[0] + di) * n + base[1] + dj) * n + base[2] + dk;
            *slot = (idx, w);
        }
        out
    }

    /// Trilinear interpolant of node values `row` at `p`.
    fn interpolate(&self, row: &[f64], p: &Vec3) -> f64 {
        let n = self.n;
        let top = (n - 1) as f64;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for k in 0..3 {
            let t = ((p[k] - self.lo[k]) * self.inv_step[k]).clamp(0.0, top);
            let i = (t as usize).min(n - 2);
            base[k] = i;
            frac[k] = t - i as f64;
        }
        let i00 = (base[0] * n + base[1]) * n + base[2];
        let i01 = i00 + n;
        let i10 = i00 + n * n;
        let i11 = i10 + n;
        let lerp = |i: usize| row[i] + frac[2] * (row[i + 1] - row[i]);
        let (a, b, c, d) = (lerp(i00), lerp(i01), lerp(i10), lerp(i11));
        let lo = a + frac[1] * (b - a);
        let hi = c + frac[1] * (d - c);
        lo + frac[0] * (hi - lo)
    }
}

fn velocity_key(v: &Vec3) -> [u64; 3] {
    [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()]
}

/// Velocities `v_i ± h_v e_k` reached by velocity finite differences, with
/// their kernel rows.
struct Extended {
    index: HashMap<[u64; 3], usize>,
    kernel: Array2<f64>,
}

struct Inner {
    domain: ConvexDomain,
    params: KernelParams,
    grid: PhaseGrid,
    line: LineQuadrature,
    line_unit: Rule1d,
    lattice: Lattice,
    /// `k_cell(v_i, v_j, w_j)`.
    kernel: Array2<f64>,
    velocity_index: HashMap<[u64; 3], usize>,
    extended: OnceLock<Extended>,
}

/// Domain, kernel, grid and line rule bound together.
#[derive(Clone)]
pub struct OperatorContext {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for OperatorContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatorContext")
            .field("domain", &self.inner.domain)
            .field("params", &self.inner.params)
            .field("resolution", &self.inner.grid.resolution)
            .field("v_max", &self.inner.grid.v_max)
            .field("line", &self.inner.line)
            .field("lattice", &self.inner.lattice.n)
            .finish()
    }
}

impl OperatorContext {
    pub fn new(
        domain: &ConvexDomain,
        params: KernelParams,
        resolution: GridResolution,
        v_max: f64,
        line: LineQuadrature,
        lattice: usize,
    ) -> Result<Self> {
        params.validate()?;
        let grid = PhaseGrid::build(domain, resolution, v_max)?;
        Self::from_grid(grid, params, line, lattice)
    }

    pub fn from_grid(
        grid: PhaseGrid,
        params: KernelParams,
        line: LineQuadrature,
        lattice: usize,
    ) -> Result<Self> {
        params.validate()?;
        if lattice < 2 {
            return Err(Error::BadResolution(format!(
                "lattice = {lattice} must be at least 2"
            )));
        }
        if line.order < 1 {
            return Err(Error::BadResolution("line order must be at least 1".into()));
        }
        let domain = grid.domain().clone();
        let kernel = kernel_matrix(&params, &grid.velocity_nodes, &grid);
        let velocity_index = grid
            .velocity_nodes
            .iter()
            .enumerate()
            .map(|(i, v)| (velocity_key(v), i))
            .collect();
        Ok(Self {
            inner: Arc::new(Inner {
                lattice: Lattice::new(&domain, lattice),
                line_unit: gauss_legendre(line.order, 0.0, 1.0),
                domain,
                params,
                grid,
                line,
                kernel,
                velocity_index,
                extended: OnceLock::new(),
            }),
        })
    }

    /// The same discretization on another domain.
    pub fn with_domain(&self, domain: &ConvexDomain) -> Result<Self> {
        self.with_domain_and_params(domain, self.inner.params)
    }

    pub fn with_domain_and_params(
        &self,
        domain: &ConvexDomain,
        params: KernelParams,
    ) -> Result<Self> {
        Self::new(
            domain,
            params,
            self.inner.grid.resolution,
            self.inner.grid.v_max,
            self.inner.line,
            self.inner.lattice.n,
        )
    }

    pub fn domain(&self) -> &ConvexDomain {
        &self.inner.domain
    }

    pub fn params(&self) -> &KernelParams {
        &self.inner.params
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.inner.grid
    }

    pub fn line(&self) -> LineQuadrature {
        self.inner.line
    }

    pub fn lattice_size(&self) -> usize {
        self.inner.lattice.n
    }

    pub fn lattice_points(&self) -> &[Vec3] {
        &self.inner.lattice.points
    }

    fn line_nodes(&self, tau: f64, nu: f64) -> Vec<(f64, f64)> {
        line_nodes(&self.inner.line_unit, self.inner.line.split, tau, nu)
    }

    /// Same nodes as [`line_nodes`] without allocating.
    fn for_each_line_node(&self, tau: f64, nu: f64, mut f: impl FnMut(f64, f64)) {
        let unit = &self.inner.line_unit;
        let mut panel = |a: f64, b: f64| {
            for (t, w) in unit.iter() {
                f(a + (b - a) * t, (b - a) * w);
            }
        };
        if self.inner.line.split && nu * tau > 4.0 {
            let cut = 4.0 / nu;
            panel(0.0, cut);
            panel(cut, tau);
        } else {
            panel(0.0, tau);
        }
    }

    fn extended(&self) -> &Extended {
        self.inner.extended.get_or_init(|| {
            let grid = &self.inner.grid;
            let hv = grid.fd_steps.1;
            let mut velocities = Vec::with_capacity(6 * grid.n_velocity());
            for v in &grid.velocity_nodes {
                for k in 0..3 {
                    let e = Vec3::ith(k, hv);
                    velocities.push(v + e);
                    velocities.push(v - e);
                }
            }
            let index = velocities
                .iter()
                .enumerate()
                .map(|(i, v)| (velocity_key(v), i))
                .collect();
            Extended {
                index,
                kernel: kernel_matrix(&self.inner.params, &velocities, grid),
            }
        })
    }

    /// `Jg(x, v) = e^{−ν(v) τ} g(q(x, v), v)`.
    pub fn apply_j(&self, g: &BoundaryData) -> Field {
        if g.is_zero() {
            return Field::zero();
        }
        let ctx = self.clone();
        let g = g.clone();
        Field::new(move |x, v| {
            let rec = ctx.domain().backward_exit(x, v)?;
            Ok((-ctx.params().nu(v) * rec.tau).exp() * g.value(&rec.q, v))
        })
    }

    /// `Kf(x, v) = Σ_j k_cell(v, v_j, w_j) f(x, v_j)`.
    pub fn apply_k(&self, f: &Field) -> Field {
        let ctx = self.clone();
        let f = f.clone();
        Field::new(move |x, v| {
            let grid = ctx.grid();
            let mut acc = 0.0;
            for (vj, wj) in grid.velocity_nodes.iter().zip(&grid.velocity_weights) {
                acc += ctx.params().k_cell(v, vj, *wj) * f.eval(x, vj)?;
            }
            Ok(acc)
        })
    }

    /// `S h(x, v) = ∫₀^τ e^{−ν(v) s} h(x − s v, v) ds`.
    pub fn apply_s(&self, h: &Field) -> Field {
        let ctx = self.clone();
        let h = h.clone();
        Field::new(move |x, v| {
            let rec = ctx.domain().backward_exit(x, v)?;
            if rec.tau == 0.0 {
                return Ok(0.0);
            }
            let nu = ctx.params().nu(v);
            let mut acc = 0.0;
            for (s, w) in ctx.line_nodes(rec.tau, nu) {
                acc += w * (-nu * s).exp() * h.eval(&(x - v * s), v)?;
            }
            Ok(acc)
        })
    }

    pub fn apply_sk(&self, f: &Field) -> Field {
        self.apply_s(&self.apply_k(f))
    }

    /// Values `f(p_j, v_i)` at the lattice evaluation points, shape
    /// `(velocity nodes, lattice nodes)`.
    pub fn lattice_samples(&self, f: &Field) -> Result<Array2<f64>> {
        let nv = self.grid().n_velocity();
        let columns: Vec<Vec<f64>> = self
            .lattice_points()
            .par_iter()
            .map(|p| {
                self.grid()
                    .velocity_nodes
                    .iter()
                    .map(|v| f.eval(p, v))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let mut out = Array2::zeros((nv, self.inner.lattice.len()));
        for (j, col) in columns.iter().enumerate() {
            for (i, x) in col.iter().enumerate() {
                out[[i, j]] = *x;
            }
        }
        Ok(out)
    }

    /// `S K I f` for lattice samples `F` of `f`.
    pub fn discrete_sk_samples(&self, samples: Array2<f64>) -> DiscreteSk {
        let collided = self.inner.kernel.dot(&samples);
        DiscreteSk {
            ctx: self.clone(),
            samples,
            collided,
            extended: OnceLock::new(),
        }
    }

    pub fn discrete_sk(&self, f: &Field) -> Result<DiscreteSk> {
        Ok(self.discrete_sk_samples(self.lattice_samples(f)?))
    }
}

fn kernel_matrix(params: &KernelParams, rows: &[Vec3], grid: &PhaseGrid) -> Array2<f64> {
    let nv = grid.n_velocity();
    let values: Vec<Vec<f64>> = rows
        .par_iter()
        .map(|v| {
            grid.velocity_nodes
                .iter()
                .zip(&grid.velocity_weights)
                .map(|(vj, wj)| params.k_cell(v, vj, *wj))
                .collect()
        })
        .collect();
    Array2::from_shape_vec((rows.len(), nv), values.concat()).expect("row lengths match")
}

/// `S K I f` where `I` is trilinear interpolation from the lattice.
///
/// For velocities that are grid nodes (or their finite-difference
/// neighbours) the collided lattice values are precomputed rows; any other
/// velocity goes through an explicit kernel row.
pub struct DiscreteSk {
    ctx: OperatorContext,
    samples: Array2<f64>,
    collided: Array2<f64>,
    extended: OnceLock<Array2<f64>>,
}

enum Row<'a> {
    Stored(ArrayView1<'a, f64>),
    Kernel(Vec<f64>),
}

impl DiscreteSk {
    pub fn context(&self) -> &OperatorContext {
        &self.ctx
    }

    /// Lattice samples of the argument.
    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    fn row(&self, v: &Vec3) -> Row<'_> {
        let key = velocity_key(v);
        if let Some(&i) = self.ctx.inner.velocity_index.get(&key) {
            return Row::Stored(self.collided.row(i));
        }
        let ext = self.ctx.extended();
        if let Some(&i) = ext.index.get(&key) {
            let table = self.extended.get_or_init(|| ext.kernel.dot(&self.samples));
            return Row::Stored(table.row(i));
        }
        let grid = self.ctx.grid();
        Row::Kernel(
            grid.velocity_nodes
                .iter()
                .zip(&grid.velocity_weights)
                .map(|(vj, wj)| self.ctx.params().k_cell(v, vj, *wj))
                .collect(),
        )
    }

    fn interpolate(&self, row: &Row<'_>, p: &Vec3) -> f64 {
        let lattice = &self.ctx.inner.lattice;
        match row {
            Row::Stored(r) => match r.as_slice() {
                Some(r) => lattice.interpolate(r, p),
                None => lattice.stencil(p).iter().map(|(i, w)| w * r[*i]).sum(),
            },
            Row::Kernel(k) => lattice
                .stencil(p)
                .iter()
                .map(|(i, w)| {
                    w * self
                        .samples
                        .column(*i)
                        .iter()
                        .zip(k)
                        .map(|(f, k)| f * k)
                        .sum::<f64>()
                })
                .sum(),
        }
    }

    pub fn eval(&self, x: &Vec3, v: &Vec3) -> Result<f64> {
        let rec = self.ctx.domain().backward_exit(x, v)?;
        if rec.tau == 0.0 {
            return Ok(0.0);
        }
        let nu = self.ctx.params().nu(v);
        let row = self.row(v);
        let mut sum = 0.0;
        self.ctx.for_each_line_node(rec.tau, nu, |s, w| {
            sum += w * (-nu * s).exp() * self.interpolate(&row, &(x - v * s));
        });
        Ok(sum)
    }

    /// Values at the lattice evaluation points, same layout as the samples.
    pub fn lattice_values(&self) -> Result<Array2<f64>> {
        let grid = self.ctx.grid();
        let columns: Vec<Vec<f64>> = self
            .ctx
            .lattice_points()
            .par_iter()
            .map(|p| {
                grid.velocity_nodes
                    .iter()
                    .map(|v| self.eval(p, v))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let mut out = Array2::zeros(self.samples.raw_dim());
        for (j, col) in columns.iter().enumerate() {
            for (i, x) in col.iter().enumerate() {
                out[[i, j]] = *x;
            }
        }
        Ok(out)
    }

    pub fn into_field(self) -> Field {
        let this = Arc::new(self);
        Field::new(move |x, v| this.eval(x, v))
    }
}
