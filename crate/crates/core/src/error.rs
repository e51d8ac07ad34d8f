use thiserror::Error;

/// Errors produced by the imaging toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("propagation with zero absorption (mu = 0, R > 0) is undefined in the attenuation-normalised TIE; use the Fresnel propagator for pure-phase objects")]
    PurePhase,

    #[error("under-resolved pattern: {0}")]
    UnderResolved(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("no half-maximum crossing: {0}")]
    NoCrossing(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
