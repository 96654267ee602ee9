use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("combinatorial count overflows the supported range: {0}")]
    Overflow(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: u64, size: u64 },
    #[error("arity mismatch: expected {expected} {what}, got {got}")]
    ArityMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("mode {mode} out of range for {modes} modes")]
    ModeOutOfRange { mode: usize, modes: usize },
    #[error("mode {0} listed more than once")]
    DuplicateMode(usize),
    #[error("parameter name `{0}` used more than once")]
    DuplicateName(String),
    #[error("matrix is not unitary (max deviation {0:.3e})")]
    NonUnitary(f64),
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("problem too large: {0}")]
    TooLarge(String),
    #[error("photon count mismatch: {0} vs {1}")]
    PhotonCountMismatch(usize, usize),
    #[error("projection onto the target subspace has zero weight")]
    NullProjection,
    #[error("input vector has zero norm")]
    ZeroNorm,
    #[error("input vector of length {len} exceeds basis size {size}")]
    TooLong { len: usize, size: usize },
    #[error("input vector is not normalized (norm^2 = {0})")]
    NotNormalized(f64),
    #[error("invalid layer specification: {0}")]
    InvalidSpec(String),
    #[error("invalid measured modes: {0}")]
    InvalidModes(String),
    #[error("no intermediates retained; run a training forward pass first")]
    MissingIntermediates,
    #[error("intermediates are stale: parameters or inputs changed since the forward pass")]
    StaleIntermediates,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("bad class grouping: {0}")]
    BadGrouping(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_row(self, row: usize) -> Error {
        Error::Row {
            row,
            source: Box::new(self),
        }
    }
}
