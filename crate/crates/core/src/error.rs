use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: expected {expected} values, got {got}")]
    InputShape { expected: usize, got: usize },

    #[error("class index {class} out of range for {classes} classes")]
    ClassIndex { class: usize, classes: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("IDX format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge: best estimate {estimate}, error bound {error_bound}")]
    Quadrature { estimate: f64, error_bound: f64 },

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
