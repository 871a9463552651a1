use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quantile level {0} is outside (0, 1)")]
    InvalidQuantile(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// The stacked covariate matrix (or a regression design) is rank deficient.
    #[error("ill-posed design: {0}")]
    IllPosedDesign(String),

    #[error("singular value decomposition did not converge")]
    SvdNoConvergence,

    #[error("panel data error: {0}")]
    Panel(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_quantile(u: f64) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidQuantile(u))
    }
}
