use thiserror::Error;

use crate::solver::IterationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("velocity has zero magnitude")]
    ZeroVelocity,

    #[error("point ({0:.6e}, {1:.6e}, {2:.6e}) lies outside the closed domain")]
    OutsideDomain(f64, f64, f64),

    #[error("point is not on the boundary (level residual {residual:.3e})")]
    NotOnBoundary { residual: f64 },

    #[error("grazing ray: incidence factor {incidence:.3e} is at or below the cutoff")]
    GrazingRay { incidence: f64 },

    #[error("collision kernel evaluated at coincident velocities")]
    CoincidentVelocities,

    #[error("parameter out of range: {0}")]
    ParameterRange(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("bad grid resolution: {0}")]
    BadResolution(String),

    #[error("field evaluation failed: {0}")]
    EvaluationFailure(String),

    #[error("boundary data queried outside the incoming set")]
    UndefinedOnGammaMinus,

    #[error("Picard iteration stopped after {} iterations without reaching the tolerance", .0.rows.len())]
    NotConverged(Box<IterationReport>),

    #[error("scaling study needs at least 4 distinct scales spanning one decade")]
    InsufficientScales,
}
