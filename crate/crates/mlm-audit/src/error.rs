//! Shared error type for every fallible operation in the crate.

use thiserror::Error;

/// Everything that can go wrong while ingesting data, fitting the model, or
/// computing a KPI. Variants carry enough context (row, column, group, bound)
/// to be actionable from a CLI error line.
#[derive(Debug, Error)]
pub enum AuditError {
    // ---- ingestion -------------------------------------------------------
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV parse error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing column {column:?} (header has: {header:?})")]
    MissingColumn { column: String, header: Vec<String> },

    #[error("row {row}, column {column:?}: cannot parse {value:?} as a number")]
    ParseError {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column {column:?}: missing value")]
    MissingValue { row: usize, column: String },

    #[error("duplicate column role: {column:?} assigned to both {first} and {second}")]
    DuplicateRole {
        column: String,
        first: &'static str,
        second: &'static str,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error(
        "group {group:?} too small to split: {rows} rows cannot yield at least one test row \
         and {min_train} training rows at test fraction {fraction}"
    )]
    GroupTooSmall {
        group: String,
        rows: usize,
        min_train: usize,
        fraction: f64,
    },

    // ---- model fitting ---------------------------------------------------
    #[error("group {group:?} is degenerate: all {rows} training rows have target class {class}")]
    DegenerateGroup {
        group: String,
        rows: usize,
        class: u8,
    },

    #[error(
        "separation detected: coefficient {coefficient:?} reached {value:.3e} \
         (bound {bound:.3e}) at outer iteration {iteration}"
    )]
    SeparationDetected {
        coefficient: String,
        value: f64,
        bound: f64,
        iteration: usize,
    },

    #[error(
        "fit did not converge after {iterations} outer iterations \
         (last relative objective change {last_change:.3e}, tolerance {tolerance:.3e})"
    )]
    NoConvergence {
        iterations: usize,
        last_change: f64,
        tolerance: f64,
    },

    #[error("unknown group {group:?}; model was fitted on groups {known:?}")]
    UnknownGroup { group: String, known: Vec<String> },

    #[error("feature vector has {got} entries; model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("linear solve failed: {0}")]
    SolveFailed(String),

    // ---- statistical tests ------------------------------------------------
    #[error("column {column:?} is constant; {context}")]
    ConstantColumn { column: String, context: String },

    #[error("sample size {n} outside supported range [{min}, {max}] for {test}")]
    SampleSizeOutOfRange {
        test: &'static str,
        n: usize,
        min: usize,
        max: usize,
    },

    #[error("need at least {need} groups for random-effect normality screening, have {have}")]
    InsufficientGroups { have: usize, need: usize },

    // ---- accuracy / fairness ----------------------------------------------
    #[error("input vectors have mismatched lengths: {0}")]
    LengthMismatch(String),

    #[error("AUC-ROC undefined: {0}")]
    AucUndefined(String),

    #[error("no rows on one side of the sensitive split: {0}")]
    EmptySide(String),

    #[error("disparate impact undefined: privileged positive rate is zero")]
    ZeroDenominator,

    #[error("equalized odds undefined for group {group:?}: {reason}")]
    UndefinedRate { group: String, reason: String },

    // ---- explainers --------------------------------------------------------
    #[error("kernel SHAP supports at most {max} features for exact enumeration, got {got}")]
    TooManyFeatures { got: usize, max: usize },

    #[error("background set is degenerate: {0}")]
    DegenerateBackground(String),

    #[error("all perturbation weights fell below {threshold:e}; kernel width too small")]
    DegenerateWeights { threshold: f64 },

    #[error("invalid explainer configuration: {0}")]
    InvalidExplainerConfig(String),

    #[error("rank correlation undefined: {0} is constant after taking magnitudes")]
    ConstantVector(String),

    // ---- report / config ----------------------------------------------------
    #[error("unknown KPI {0:?}")]
    UnknownKpi(String),

    #[error("KPI {kpi:?} has non-finite value {value}")]
    NonFiniteValue { kpi: String, value: f64 },

    #[error("invalid RAG bands for {kpi:?}: {reason}")]
    InvalidBands { kpi: String, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{0}")]
    Other(String),
}

impl AuditError {
    /// Convenience constructor for I/O failures tied to a path.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        AuditError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, AuditError>;
