use thiserror::Error;

/// Errors raised by the focusing, thermal and fitting routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature under-resolved: {0}")]
    QuadratureUnderresolved(String),

    #[error("point outside the aperture: h = {h} mm, aperture radius = {radius} mm")]
    OutsideAperture { h: f64, radius: f64 },

    #[error("heating regime: cooling denominator {denominator:e} is not positive")]
    HeatingRegime { denominator: f64 },

    #[error("grid too coarse: spacing {spacing} nm exceeds sigma/3 = {limit} nm along {axis}")]
    GridTooCoarse { axis: char, spacing: f64, limit: f64 },

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("optimizer did not converge: {0}")]
    NoConvergence(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for errors caused by bad user input rather than a numerical failure.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::OutsideAperture { .. }
                | Error::Parse { .. }
                | Error::Config(_)
                | Error::Io(_)
                | Error::Mismatch(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
