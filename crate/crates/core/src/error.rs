//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by assembly, stepping and diagnostic operations.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error("dimension mismatch: operator dim {op_dim}, vector len {vec_len}")]
    DimensionMismatch { op_dim: usize, vec_len: usize },

    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },

    #[error("singular tridiagonal system: pivot magnitude {magnitude:e} at index {index}")]
    SingularPivot { index: usize, magnitude: f64 },

    #[error("linear solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    SolveResidual { residual: f64, tolerance: f64 },

    #[error("dimension {dim} exceeds dense-oracle cap {cap}; reduce the grid")]
    OracleCapExceeded { dim: usize, cap: usize },

    #[error("interaction point x = {x} lies within 2h = {two_h} of the domain boundary")]
    PointNearBoundary { x: f64, two_h: f64 },

    #[error("trajectory leaves the safe region at t = {t} (x = {x})")]
    TrajectoryOutOfRange { t: f64, x: f64 },

    #[error("separation x(t) = {x} at t = {t} is below the floor {floor:e}")]
    SeparationFloor { t: f64, x: f64, floor: f64 },

    #[error("non-finite state detected in slice {slice}")]
    NonFiniteState { slice: usize },

    #[error("boundary-band mass {mass:e} exceeds {limit:e}; state too close to the domain edge")]
    BoundaryMass { mass: f64, limit: f64 },

    #[error("dilation factor {theta} outside the allowed range [{min}, {max}]")]
    DilationRange { theta: f64, min: f64, max: f64 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid family spec: {0}")]
    InvalidSpec(String),

    #[error("eigensolver failed to converge for eigenvalue index {index}")]
    EigNoConvergence { index: usize },

    #[error("quotient iteration for the equivalence constant did not converge")]
    QuotientNoConvergence,
}

pub type Result<T> = std::result::Result<T, EngineError>;
