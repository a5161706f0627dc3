use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A covariance matrix, or a quantity derived from one, that violates the
    /// uncertainty principle beyond numerical tolerance.
    #[error("unphysical state: {0}")]
    Unphysical(String),

    #[error("threshold too aggressive: success probability {p_s:.3e} below floor")]
    ThresholdTooAggressive { p_s: f64 },

    #[error("quadrature did not converge (relative error {relative_error:.3e})")]
    Quadrature { relative_error: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Unphysical(_) => "unphysical",
            Error::ThresholdTooAggressive { .. } => "ps_floor",
            Error::Quadrature { .. } => "quadrature",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Toml(_) => "toml",
        }
    }
}
