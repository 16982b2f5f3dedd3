use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("sample index {index} out of range (n = {n})")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid sample count: {0}")]
    InvalidCount(String),

    #[error("every grid point had a vanishing first derivative ({skipped} skipped)")]
    AllPointsDegenerate { skipped: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid problem data: {0}")]
    InvalidProblem(String),

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix dimension {0} exceeds the supported maximum of 512")]
    TooLarge(usize),

    #[error("Jacobi iteration did not converge within {sweeps} sweeps")]
    NotConverged { sweeps: usize },

    #[error("non-finite value encountered: {0}")]
    NonFiniteResult(String),

    #[error("target accuracy eps must lie in (0, 1), got {0}")]
    InvalidEps(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("small step eta = {eta:e} must be strictly smaller than large step r = {r:e}")]
    StepOrderViolation { eta: f64, r: f64 },

    #[error("iterate became non-finite or exceeded the divergence bound at t = {t}")]
    NonFiniteIterate { t: usize },

    #[error("no candidate iterates to pick from")]
    EmptyCandidateSet,

    #[error("the variance lower bound check requires an unregularized objective (reg_weight = {0})")]
    RegularizerPresent(f64),

    #[error("beta must lie in (0, 1), got {0}")]
    InvalidBeta(f64),

    #[error("trajectory is missing iterate snapshots: {0}")]
    MissingSnapshots(String),

    #[error("Hessian has no negative curvature (lambda_min = {0:e})")]
    NoNegativeCurvature(f64),

    #[error("at least {required} trajectories are required, got {found}")]
    InsufficientSeeds { required: usize, found: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("no saddle found: {0}")]
    NoSaddleFound(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid config: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
