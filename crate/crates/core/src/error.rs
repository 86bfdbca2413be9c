use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("dimension mismatch: expected {expected}x{expected}, got {rows}x{cols}")]
    Dimension {
        expected: usize,
        rows: usize,
        cols: usize,
    },

    /// An input that should be a density matrix is not one.
    #[error("domain error: {0}")]
    Domain(String),

    /// A propagated state left the set of (unnormalized) density matrices.
    #[error("state corruption: {0}")]
    StateCorruption(String),

    #[error("blow-up at step {step}: {detail}")]
    BlowUp { step: usize, detail: String },

    #[error("singular exponential family: Tr(rho A_{level}) vanished")]
    SingularFamily { level: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
