use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by scenario ingestion, reserve sizing, dispatch
/// optimization, and curve analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to access `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("non-numeric value `{value}` in column `{column}` at data row {row}")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },

    #[error("negative value {value} in column `{column}` at data row {row}")]
    NegativeValue {
        column: String,
        row: usize,
        value: f64,
    },

    #[error("non-finite value in column `{column}` at data row {row}")]
    NonFinite { column: String, row: usize },

    #[error("series `{series}` has {got} entries, expected {expected}")]
    LengthMismatch {
        series: String,
        expected: usize,
        got: usize,
    },

    #[error("timestamps not strictly increasing at data row {row}")]
    NonMonotonicTimestamps { row: usize },

    #[error("scenario horizon must contain at least one period")]
    EmptyHorizon,

    #[error("renewable actuals are required for error extraction but absent")]
    MissingActuals,

    #[error("reference capacity must be positive and finite, got {0}")]
    InvalidReferenceCapacity(f64),

    #[error("error sample set must be non-empty with finite samples")]
    InvalidSamples,

    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("degenerate scale: all samples identical")]
    DegenerateScale,

    #[error("risk level must lie in {range}, got {q}")]
    RiskOutOfRange { q: f64, range: &'static str },

    #[error("invalid generator configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("structurally infeasible: required renewable delivery exceeds available generation")]
    StructurallyInfeasible,

    #[error("unbounded objective")]
    Unbounded,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("beta {beta} outside covered interval [{lo}, {hi}]")]
    OutsideInterval { beta: f64, lo: f64, hi: f64 },

    #[error("budget {budget} infeasible: below curve minimum {minimum}")]
    BudgetInfeasible { budget: f64, minimum: f64 },

    #[error("recursion depth cap {0} exceeded while splitting intervals; check tolerances")]
    DepthExceeded(usize),
}
