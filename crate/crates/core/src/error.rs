use thiserror::Error;

/// Errors produced by the inference pipeline.
#[derive(Debug, Error)]
pub enum BincoError {
    #[error("column {0} has zero variance")]
    ZeroVarianceColumn(usize),
    #[error("non-finite input at row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },
    #[error("data matrix needs at least 2 rows and 2 columns, got {rows}x{cols}")]
    TooSmall { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("perturbation floor must lie in (0, 1], got {0}")]
    InvalidPerturbationFloor(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("resample index {index} out of range 1..={count}")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("resample {index}: {source}")]
    Resample {
        index: usize,
        #[source]
        source: Box<BincoError>,
    },
    #[error("quadrature did not reach tolerance (last change {0:e})")]
    QuadratureFailure(f64),
    #[error("fitting range contains too few usable lattice points")]
    EmptyFitRange,
    #[error("null model optimizer found no finite optimum")]
    OptimizerFailure,
    #[error("no edge has selection frequency at or above the cutoff")]
    EmptyTail,
    #[error("smoothing requires a density with mass at more than one lattice point")]
    DegenerateDensity,
    #[error("stability threshold must exceed 0.5, got {0}")]
    ThresholdTooLow(f64),
    #[error("selection set is empty")]
    EmptySelection,
    #[error("frequency tables are inconsistent: {0}")]
    InconsistentTables(String),
    #[error("degree sequence could not be realized after {0} draws")]
    UngraphicalDegreeSequence(usize),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("signal calibration failed after {0} attempts")]
    CalibrationFailure(usize),
    #[error("an adjacency entry collapsed to zero after {0} attempts")]
    LostEdge(usize),
    #[error("matrix factorization failed: {0}")]
    FactorizationFailure(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl BincoError {
    /// True when the error comes from file or stream handling rather than numerics.
    pub fn is_io(&self) -> bool {
        matches!(self, BincoError::Io(_))
    }

    /// True when the error stems from invalid user-supplied parameters.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            BincoError::InvalidPerturbationFloor(_)
                | BincoError::InvalidParameter(_)
                | BincoError::BadParams(_)
                | BincoError::Parse(_)
                | BincoError::ThresholdTooLow(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, BincoError>;
