use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("energy grid is not strictly increasing at row {row}")]
    NonMonotoneGrid { row: usize },
    #[error("negative intensity {value} at row {row}")]
    NegativeIntensity { row: usize, value: f64 },
    #[error("non-finite value at row {row}")]
    NonFiniteSample { row: usize },
    #[error("length mismatch: {energies} energies vs {intensities} intensities")]
    LengthMismatch { energies: usize, intensities: usize },
    #[error("grid spacing {spacing} meV at row {row} is below the instrument resolution {resolution} meV")]
    SpacingBelowResolution {
        row: usize,
        spacing: f64,
        resolution: f64,
    },
    #[error("fit window holds {points} grid points, at least 5 are required")]
    DegenerateWindow { points: usize },
    #[error("model produced a non-finite value")]
    NonFiniteModel,
    #[error("relative error undefined: zero shift carries a nonzero uncertainty of {0} meV")]
    UndefinedRelativeError(f64),
    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("no convergence after {0} iterations")]
    NonConvergence(usize),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
