use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("invalid mode grid: {0}")]
    InvalidGrid(String),
    #[error("mode {k} violates the smoothness class (ratio {ratio:.4}, minimal admissible c_v = {minimal_c_v:.6})")]
    ClassViolation { k: i64, ratio: f64, minimal_c_v: f64 },
    #[error("step size {dt} exceeds the safety bound {limit}")]
    StepSizeTooLarge { dt: f64, limit: f64 },
    #[error("mode {k} lies outside the grid |k| <= {k_max}")]
    ModeOutOfRange { k: i64, k_max: usize },
    #[error("empty index region")]
    EmptyRegion,
    #[error("generator is not anti-selfadjoint (defect {defect:e})")]
    NotSkew { defect: f64 },
    #[error("middle block N = {n} exceeds K/3 for K = {k_max}")]
    BlockTooLarge { n: usize, k_max: usize },
    #[error("sub-Gram system for column {m} is numerically singular (condition {condition:e})")]
    SingularGram { m: i64, condition: f64 },
    #[error("matrix is not unitary (defect {defect:e})")]
    NotUnitary { defect: f64 },
    #[error("N = {n} is too small: {reason}")]
    NTooSmall { n: usize, reason: String },
    #[error("lattice sum did not stabilise: drift {drift:e} on range doubling")]
    DivergentTail { drift: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
