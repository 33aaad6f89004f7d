use thiserror::Error;

use crate::coupling::CouplingRecord;

/// Errors surfaced by the library. Variant names match the failure modes
/// each pipeline documents; the CLI prints them verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point {y} is outside the image of branch {branch}")]
    OutOfBranchImage { branch: usize, y: f64 },

    #[error("truncation too coarse: open mass {open_mass:.3e} exceeds {limit:.3e} (raise max_time or lower min_len)")]
    TruncationTooCoarse { open_mass: f64, limit: f64 },

    #[error("u-hat product not converged at depth {depth}: |u(depth) - u(depth+5)| = {gap:.3e}")]
    DepthTooSmall { depth: usize, gap: f64 },

    #[error("tower is periodic: gcd of return times is {gcd}")]
    PeriodicTower { gcd: u64 },

    #[error("probe of length {n_probe} too short: no plateau above gamma_0 found")]
    ProbeTooShort { n_probe: usize },

    #[error("horizon {horizon} exceeded before the simultaneous return")]
    HorizonExceeded {
        horizon: usize,
        partial: Box<CouplingRecord>,
    },

    #[error("bin has {count} samples, fewer than the required {required}")]
    InsufficientSamples { count: usize, required: usize },

    #[error("cell budget of {budget} exceeded at depth {depth}")]
    CellBudgetExceeded { budget: usize, depth: usize },

    #[error("extraction with epsilon {epsilon} drives the residual density negative")]
    ExtractionNegative { epsilon: f64 },

    #[error("orbit length {len} is shorter than 100 x max lag ({max_lag})")]
    SeriesTooShort { len: usize, max_lag: usize },

    #[error("series has nonpositive value {value} at n = {n}")]
    NonpositiveValues { n: f64, value: f64 },

    #[error("degenerate variance {sigma2:.3e}: observable may be a coboundary")]
    DegenerateVariance { sigma2: f64 },

    #[error("unknown observable `{0}`")]
    UnknownObservable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
