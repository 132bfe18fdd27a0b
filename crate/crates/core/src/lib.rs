//! Deterministic solver for the stationary linearized Boltzmann equation
//! with incoming boundary data on small convex domains.
//!
//! The boundary value problem `v·∇ₓf = −ν(v) f + K f` in `Ω × ℝ³`,
//! `f = g` on the incoming boundary, is recast in integral form
//! `f = Jg + S K f` and solved by Picard iteration, i.e. by summing the
//! Neumann series `Σ (S K)^i Jg`. Around the solver sits a suite of
//! diagnostics that measures the quantitative statements behind the
//! existence theory: chord/incidence bounds on the domain, integrability of
//! the collision kernel, `diam^{1/2}` contraction of `S K`, and the `H¹`
//! bounds on `S K` and on `Jg`.
//!
//! Module map:
//!
//! * [`geometry`]: sphere/ellipsoid ray geometry (exit times, normals,
//!   incidence factor, exit-time gradients, curvature constant).
//! * [`kernel`]: model collision kernel, collision frequency and
//!   integrability probes.
//! * [`grids`]: phase-space quadrature, [`Field`]s, boundary data and norms.
//! * [`operators`]: the operators `J`, `K`, `S` and the lattice-backed
//!   discrete `S K` used by the solver.
//! * [`solver`]: Picard engine, residuals, contraction and scaling studies.
//! * [`diagnostics`]: one verdict per lemma-level statement.

pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod grids;
pub mod kernel;
pub mod operators;
pub mod quadrature;
pub mod solver;

pub use diagnostics::LemmaVerdict;
pub use error::{Error, Result};
pub use geometry::{ConvexDomain, ExitRecord, Shape};
pub use grids::{BoundaryData, Field, GridResolution, NormKind, PhaseGrid};
pub use kernel::KernelParams;
pub use operators::{LineQuadrature, OperatorContext};
pub use solver::{IterationReport, SolveConfig};

/// Three-vector used for positions and velocities.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Cutoff on the incidence factor below which a ray counts as grazing.
pub const GRAZING_CUTOFF: f64 = 1e-8;
