use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs are structurally inconsistent (grid or length mismatch).
    #[error("configuration error: {0}")]
    Config(String),

    /// A parameter is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// The requested operation does not support the kernel form given.
    #[error("unsupported form: {0}")]
    UnsupportedForm(String),

    /// Picard iteration left the ball guaranteed by the fixed-point bound.
    #[error("divergence at iteration {iteration}: norm {norm:.6e} exceeds {limit:.6e} (violates ||x||_X <= 2||y||_X)")]
    Divergence { iteration: usize, norm: f64, limit: f64 },

    /// Ensembles do not share a noise lineage, so a synchronous coupling is not admissible.
    #[error("lineage mismatch: {0}")]
    Lineage(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
