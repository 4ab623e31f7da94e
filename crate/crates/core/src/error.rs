use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mean undefined: Frechet shape must exceed 1 (got {0})")]
    MeanUndefined(f64),

    #[error("non-finite integrand at node s = {node}")]
    NonFiniteIntegrand { node: f64 },

    #[error("input error: {0}")]
    Input(String),

    #[error("row {row}, column {column}: {reason}")]
    BadRecord {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("no split exists: all capital-labor ratios identical")]
    NoSplit,

    #[error("rank-deficient design matrix: {0}")]
    RankDeficient(String),

    #[error("inconsistent moments: {0}")]
    InconsistentMoments(String),

    #[error("divergent value: (1-lambda)/(1+R) >= 1")]
    DivergentValue,

    #[error("no equilibrium wage in [{lo}, {hi}]")]
    NoEquilibriumWage { lo: f64, hi: f64 },

    #[error("entry value not decreasing in the wage near w = {0}")]
    NonMonotoneEntryValue(f64),

    #[error("equilibrium invariants violated: {0:?}")]
    InvariantViolation(Vec<(String, f64)>),

    #[error("calibration did not converge: best loss {0}")]
    CalibrationFailed(f64),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
