use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("{op}: degree {degree} is not allowed")]
    InvalidDegree { op: &'static str, degree: usize },

    #[error("degree mismatch: expected {expected}, found {found}")]
    DegreeMismatch { expected: usize, found: usize },

    #[error("field has {found} points but the grid has {expected}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("metric is not symmetric positive definite ({0})")]
    NotSpd(String),

    #[error("matrix is not a complex structure: |J^2 + I| = {residual:e}")]
    NotComplexStructure { residual: f64 },

    #[error("conjugating field is singular at point {point} (condition number {condition:e})")]
    SingularConjugator { point: usize, condition: f64 },

    #[error("complex structure at point {point} induces the opposite orientation")]
    OrientationMismatch { point: usize },

    #[error("form is not J-invariant: residual {residual:e}")]
    NotInvariant { residual: f64 },

    #[error("form is not J-anti-invariant: residual {residual:e}")]
    NotAntiInvariant { residual: f64 },

    #[error("form is not {expected}: relative residual {residual:e}")]
    WrongDuality { expected: &'static str, residual: f64 },

    #[error("discretization breakdown: {0}")]
    Discretization(String),

    #[error("conjugate gradient did not converge in {iterations} iterations (last residual {last:e})")]
    CgNotConverged {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("no spectral gap within a block of {} (eigenvalue tail {tail:?})", tail.len())]
    NoSpectralGap { tail: Vec<f64> },

    #[error("ambiguous rank: smallest retained {retained:e} / largest discarded {discarded:e} < required gap {required:e}")]
    RankAmbiguous {
        retained: f64,
        discarded: f64,
        required: f64,
        tail: Vec<f64>,
    },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("form is not closed: relative residual {residual:e}")]
    NotClosed { residual: f64 },

    #[error("form does not tame J: minimum margin {margin:e}")]
    NotTaming { margin: f64 },

    #[error("right-hand side is not closed: |d rhs| = {residual:e}")]
    InconsistentRhs { residual: f64 },

    #[error("solver diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("malformed form container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
