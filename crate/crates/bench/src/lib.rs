//! Fixtures shared by the benchmarks.

use lbe_core::{ConvexDomain, GridResolution, KernelParams, LineQuadrature, OperatorContext};

/// Ball of radius 0.1 at the default discretization.
pub fn small_ball_context() -> OperatorContext {
    OperatorContext::new(
        &ConvexDomain::sphere(0.1, [0.0; 3]).expect("valid radius"),
        KernelParams::default(),
        GridResolution::default(),
        6.0,
        LineQuadrature::default(),
        12,
    )
    .expect("valid discretization")
}
