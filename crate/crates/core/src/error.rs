use thiserror::Error;

/// Errors produced by the simulation and bound routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("twist angle {theta} rad is degenerate: the moire cell is infinite")]
    DegenerateAngle { theta: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("polynomial propagator needs degree > {cap} to reach tol {tol:e}")]
    NonConvergence { cap: usize, tol: f64 },

    #[error("dense propagator limited to n <= {limit}, got n = {n}")]
    TooLargeForDense { n: usize, limit: usize },

    #[error("decay rate underflow: spectral distance d = {d:e} is too small to resolve")]
    DegenerateBound { d: f64 },

    #[error("no truncation radius up to {cap} A reaches the target error {target:e}")]
    Infeasible { target: f64, cap: f64 },

    #[error("band {band} is degenerate at k (gap {gap:e} eV)")]
    DegenerateBand { band: i32, gap: f64 },

    #[error("wave packet is not contained: boundary mass fraction {fraction:e} exceeds {limit:e}")]
    Containment { fraction: f64, limit: f64 },

    #[error("site at ({x:.3}, {y:.3}) lies outside the envelope box")]
    OutOfBox { x: f64, y: f64 },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("config error at line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
