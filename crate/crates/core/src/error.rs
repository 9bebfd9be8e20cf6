use thiserror::Error;

/// Errors raised while building or querying an operator-observed GP.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid kernel parameter: {0}")]
    InvalidKernel(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("{family} kernel does not provide derivative order ({d1}, {d2})")]
    UnsupportedDerivative {
        family: &'static str,
        d1: u8,
        d2: u8,
    },

    #[error("functional `{0}` needs a derivative but the function has none")]
    MissingDerivative(String),

    #[error("invalid functional: {0}")]
    InvalidFunctional(String),

    #[error("Gram matrix is singular: {reason}")]
    SingularGram { reason: String },

    #[error("batch is redundant with already assimilated observations: {reason}")]
    RedundantBatch { reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("site {site} lies outside the grid [{lo}, {hi}]")]
    SiteOutOfGrid { site: f64, lo: f64, hi: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("tolerance exceeded: {0}")]
    ToleranceExceeded(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Variant name, for diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidKernel(_) => "InvalidKernel",
            Error::NonFinite(_) => "NonFinite",
            Error::UnsupportedDerivative { .. } => "UnsupportedDerivative",
            Error::MissingDerivative(_) => "MissingDerivative",
            Error::InvalidFunctional(_) => "InvalidFunctional",
            Error::SingularGram { .. } => "SingularGram",
            Error::RedundantBatch { .. } => "RedundantBatch",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::SiteOutOfGrid { .. } => "SiteOutOfGrid",
            Error::Config(_) => "ConfigError",
            Error::ToleranceExceeded(_) => "ToleranceExceeded",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
