//! Error types shared across the crate.

/// Crate-wide error enum. Variants mirror the failure classes used by the
/// operation contracts: shape problems, bad inputs, bad configuration,
/// violated internal contracts, and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor shapes incompatible with the requested operation.
    #[error("dimension error: {0}")]
    Dim(String),

    /// Invalid data fed into the pipeline (empty waveform, bad sizes, ...).
    #[error("input error: {0}")]
    Input(String),

    /// Invalid configuration value or combination.
    #[error("config error: {0}")]
    Config(String),

    /// An internal precondition was violated by the caller.
    #[error("contract error: {0}")]
    Contract(String),

    /// Training produced a non-finite loss.
    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },

    /// Malformed binary file (CMMD / CMMX / CMME).
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
