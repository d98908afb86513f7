use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid transfer function: {0}")]
    InvalidTf(String),

    #[error("denominator magnitude below 1e-14 at DFT line {line}")]
    DenominatorZeroOnGrid { line: usize },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invariant violation at {path}: {message}")]
    InvariantViolation { path: String, message: String },

    #[error("I - G(z) is numerically singular at line {line} (cond > 1e12)")]
    SingularAtLine { line: usize },

    #[error("unknown node index {0}")]
    UnknownNode(usize),

    #[error("noise covariance is not positive semidefinite (min eigenvalue {0})")]
    NotPsd(f64),

    #[error("simulation diverged: |w_{node}({t})| > 1e12")]
    DivergedSimulation { node: usize, t: usize },

    #[error("rank-deficient regression window at line {line}")]
    RankDeficientWindow { line: usize },

    #[error("need at least {needed} frequency lines, got {got}")]
    InsufficientLines { needed: usize, got: usize },

    #[error("reference set is empty")]
    EmptyReferenceSet,

    #[error("frequency grids do not match: {0}")]
    GridMismatch(String),

    #[error("rank-deficient linear system: {0}")]
    RankDeficient(String),

    #[error("cost became non-finite and no admissible step exists")]
    NonFiniteCost,

    #[error("inverse noise filter unstable and no admissible step exists")]
    UnstableNoiseInverse,

    #[error("true impulse response is degenerate (constant)")]
    DegenerateTruth,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
