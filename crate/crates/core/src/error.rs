use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A quadrature or refinement loop stopped before reaching its tolerance.
    #[error("tolerance not reached: {message} (partial value {partial})")]
    Tolerance { message: String, partial: f64 },

    /// Bisection could not bracket a weight value inside the representable range.
    #[error("weight is bounded on the search range: {0}")]
    UnboundedWeight(String),

    /// An integral that should converge near the boundary does not.
    #[error("divergent integral: {0}")]
    Divergence(String),

    #[error("parse error at `{token}`: {message}")]
    Parse { token: String, message: String },

    /// Construction parameters cannot satisfy a required condition.
    #[error("construction error: {0}")]
    Construction(String),

    /// A sampler was asked for more precision than its sample budget allows.
    #[error("precision error: {0}")]
    Precision(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(token: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            token: token.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
