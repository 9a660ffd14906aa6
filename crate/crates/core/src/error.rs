use thiserror::Error;

/// Errors raised by estimation, testing and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate window: {0}")]
    DegenerateWindow(String),
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("points outside window: {0:?}")]
    OutsideWindow(Vec<usize>),
    #[error("duplicate point at index {0}")]
    DuplicatePoint(usize),
    #[error("empty pattern")]
    EmptyPattern,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("insufficient quadrature grid ({0}x{1}, need at least 10x10)")]
    InsufficientQuadrature(usize, usize),
    #[error("degenerate field: every cell is masked")]
    DegenerateField,
    #[error("degenerate coordinates: all values equal")]
    DegenerateCoordinates,
    #[error("degenerate partition: {distinct} distinct values for {cells} cells")]
    DegeneratePartition { distinct: usize, cells: usize },
    #[error("empty margin in contingency table")]
    EmptyMargin,
    #[error("ragged sample matrix: row {row} has length {len}, expected {expected}")]
    Ragged { row: usize, len: usize, expected: usize },
    #[error("insufficient replicates for level: alpha={alpha} needs at least {needed} samples, got {got}")]
    InsufficientReplicates { alpha: f64, needed: usize, got: usize },
    #[error("invalid dominating rate: intensity {found} exceeds bound {bound}")]
    InvalidDominatingRate { found: f64, bound: f64 },
    #[error("covariance not PD")]
    CovarianceNotPd,
    #[error("zero intensity at point {0}")]
    ZeroIntensity(usize),
    #[error("mismatched summary grids")]
    MismatchedGrids,
    #[error("zero total density")]
    ZeroDensity,
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code used by the command-line front end: 2 for data
    /// problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::CovarianceNotPd
            | Error::NonFinite(_)
            | Error::DegenerateField
            | Error::ZeroIntensity(_)
            | Error::InvalidDominatingRate { .. } => 3,
            _ => 2,
        }
    }
}
