use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("index {index} out of range 0..{len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("corrupted spectrum: imaginary residue {residue:.3e} after inverse transform")]
    CorruptedSpectrum { residue: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("FISTA diverged at iteration {iteration} (L = {lipschitz:.6e})")]
    Divergence { iteration: usize, lipschitz: f64 },

    #[error("ill-conditioned system: {0}")]
    Conditioning(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("geometry mismatch: expected {expected}, got {actual}")]
    Geometry { expected: String, actual: String },

    #[error("uncovered pixel ({row}, {col}, {slice}) and no fallback image supplied")]
    UncoveredPixel { row: usize, col: usize, slice: usize },

    #[error("model checksum mismatch")]
    Checksum,

    #[error("malformed model file: {0}")]
    Format(String),

    #[error("image error for {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
