use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Result<T> = std::result::Result<T, MaxwayError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaxwayError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {field} at row {row}")]
    NonFinite { field: String, row: usize },
    #[error("binary column {field} has non-0/1 value {value} at row {row}")]
    BadBinary { field: String, row: usize, value: f64 },
    #[error("bad split size: n_test={n_test} with n={n}")]
    BadSplitSize { n_test: usize, n: usize },
    #[error("lambda grid is empty")]
    EmptyGrid,
    #[error("solver did not converge after {iterations} iterations (KKT gap {gap:.3e})")]
    NoConvergence { iterations: usize, gap: f64 },
    #[error("design is rank deficient; dependent columns {columns:?}")]
    RankDeficient { columns: Vec<usize> },
    #[error("norm of y is zero")]
    ZeroNormY,
    #[error("norm of the y residual is zero")]
    ZeroNormResidual,
    #[error("p={p} too small: {requirement}")]
    BadP { p: usize, requirement: String },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("csv error: {0}")]
    Csv(String),
    #[error("io error: {0}")]
    Io(String),
}

impl MaxwayError {
    /// Errors caused by malformed inputs rather than by a failing computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            MaxwayError::DimensionMismatch(_)
                | MaxwayError::NonFinite { .. }
                | MaxwayError::BadBinary { .. }
                | MaxwayError::BadSplitSize { .. }
                | MaxwayError::BadP { .. }
                | MaxwayError::GridMismatch(_)
                | MaxwayError::InvalidConfig(_)
                | MaxwayError::MissingColumn(_)
                | MaxwayError::Csv(_)
                | MaxwayError::Io(_)
        )
    }
}

impl From<csv::Error> for MaxwayError {
    fn from(e: csv::Error) -> Self {
        MaxwayError::Csv(e.to_string())
    }
}

impl From<std::io::Error> for MaxwayError {
    fn from(e: std::io::Error) -> Self {
        MaxwayError::Io(e.to_string())
    }
}

/// Non-fatal conditions raised while fitting or testing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "flag", rename_all = "snake_case")]
pub enum Flag {
    /// Zero-variance columns were dropped before fitting.
    DroppedConstantColumns { columns: Vec<usize> },
    /// Logistic fit diverged towards perfect separation.
    Separation,
    /// Maxway residual variance was floored.
    VarianceFloorHit,
    /// d_I design was rank deficient and ridge-regularized.
    RankDeficientFallback,
    /// Columns that were linear combinations of others were dropped.
    CollinearColumnsDropped { columns: Vec<usize> },
    /// Constant target: learner returned a constant predictor.
    DegenerateTarget,
    /// Sub-p-values of the two directions of the model-xy procedure.
    SubPValues { forward: f64, reverse: f64 },
    /// The surrogate is known to violate the working independence assumption.
    ImperfectSurrogate,
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Flag::DroppedConstantColumns { columns } => {
                write!(f, "dropped_constant_columns{columns:?}")
            }
            Flag::Separation => write!(f, "separation"),
            Flag::VarianceFloorHit => write!(f, "variance_floor_hit"),
            Flag::RankDeficientFallback => write!(f, "rank_deficient_fallback"),
            Flag::CollinearColumnsDropped { columns } => {
                write!(f, "collinear_columns_dropped{columns:?}")
            }
            Flag::DegenerateTarget => write!(f, "degenerate_target"),
            Flag::SubPValues { forward, reverse } => {
                write!(f, "sub_p_values({forward},{reverse})")
            }
            Flag::ImperfectSurrogate => write!(f, "imperfect_surrogate"),
        }
    }
}

/// Pushes a flag unless an equal one is already present.
pub(crate) fn push_flag(flags: &mut Vec<Flag>, flag: Flag) {
    if !flags.contains(&flag) {
        flags.push(flag);
    }
}
