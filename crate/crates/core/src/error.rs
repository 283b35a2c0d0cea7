use thiserror::Error;

/// Errors surfaced by the solver layers.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("coordinate {x} outside the domain [0, {domain_length}]")]
    OutOfDomain { x: f64, domain_length: f64 },

    #[error("mesh too coarse: {n} nodes, need at least {min}")]
    MeshTooCoarse { n: usize, min: usize },

    #[error("meshes do not match: {0}")]
    MeshMismatch(String),

    #[error("nonpositive film thickness h = {h} at node {node}; mobility powers require h > 0")]
    NonpositiveThickness { h: f64, node: usize },

    #[error("numerically singular band matrix at pivot column {column}")]
    SingularMatrix { column: usize },

    #[error("Newton iteration failed to converge: {0}")]
    NewtonFailure(String),

    #[error("time step underflow: dt = {dt} fell below dt_min = {dt_min}")]
    StepUnderflow { dt: f64, dt_min: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, SolverError>;
