use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture shape: {0}")]
    InvalidShape(String),

    #[error("fmax {0} MHz is outside the supported range (150, 600] MHz")]
    UnsupportedTier(f64),

    #[error("invalid memory spec: {0}")]
    InvalidMemory(String),

    #[error("invalid latency profile: {0}")]
    InvalidLatency(String),

    #[error("invalid blocking plan: {0}")]
    InvalidPlan(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("partition of {rows}x{cols} into {block_rows}x{block_cols} blocks is not exact")]
    IndivisiblePartition {
        rows: usize,
        cols: usize,
        block_rows: usize,
        block_cols: usize,
    },

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("problem violates blocking constraints: {}", join_violations(.0))]
    ProblemViolations(Vec<Violation>),

    #[error("on-chip capacity exceeded: {0}")]
    CapacityExceeded(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed matrix data: {0}")]
    MalformedData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
