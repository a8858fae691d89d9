use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad or unsupported configuration value.
    #[error("configuration error: {0}")]
    Config(String),

    /// A key or refinement would need more than the 21 levels that fit in a 64-bit Morton word.
    #[error("precision limit: level {level} exceeds the maximum of {max} (3 bits per level in a 64-bit key)")]
    PrecisionLimit { level: u32, max: u32 },

    #[error("lookup error: {0}")]
    Lookup(String),

    /// The dense oracle refuses matrices above its size guard.
    #[error("dense oracle refused: N = {n} exceeds the guard of {max} (override with H2FMM_ORACLE_MAX)")]
    OracleGuard { n: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("infeasible partition: {processes} processes but only {leaves} leaves")]
    InfeasiblePartition { processes: usize, leaves: usize },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
