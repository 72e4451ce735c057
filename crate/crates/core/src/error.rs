use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("measure has no atoms")]
    EmptyMeasure,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("structure {0} is empty")]
    EmptyStructure(usize),
    #[error("class {0} has no samples")]
    EmptyClass(usize),
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("label {label} out of range for {k} groups")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("sinkhorn did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("exact solver limited to n <= 8, got n = {0}")]
    TooLarge(usize),
    #[error("bandwidth must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("vertex {0} has zero degree")]
    ZeroDegree(usize),
    #[error("symmetric eigensolver failed: {0}")]
    EigenFailure(String),
    #[error("k = {k} exceeds the number of distinct points ({distinct})")]
    KExceedsDistinctPoints { k: usize, distinct: usize },
    #[error("cluster {0} became empty")]
    EmptyCluster(usize),
    #[error("coupling row {0} carries no mass")]
    ZeroRow(usize),
    #[error("training set is empty")]
    EmptyTraining,
    #[error("kernel system is singular even with ridge {0:e}")]
    SingularSystem(f64),
    #[error("expected 2-D points, got dimension {0}")]
    NotTwoDimensional(usize),
    #[error("invalid radii: need 0 < inner < outer, got ({0}, {1})")]
    InvalidRadii(f64, f64),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: usize,
        message: String,
    },
    #[error("file has no `label` column")]
    MissingLabelColumn,
    #[error("inner transport problem ({source_index}, {target_index}): {error}")]
    InnerTransport {
        source_index: usize,
        target_index: usize,
        error: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
