use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] gradlab_core::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("render error: {0}")]
    Render(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    /// Process exit code: 2 for configuration, 3 for data and I/O, 4 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        use gradlab_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Render(_) => 2,
            CliError::Data(_) | CliError::Io { .. } => 3,
            CliError::Core(e) => match e {
                E::Config(_) | E::InputShape { .. } | E::ClassIndex { .. } => 2,
                E::Data(_) | E::Format { .. } | E::Checkpoint(_) | E::Io(_) => 3,
                E::Domain(_) | E::Quadrature { .. } | E::Degenerate(_) | E::UndefinedMetric(_) => 4,
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gradlab_core::Error as E;

    #[test]
    fn exit_codes_by_category() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Render("x".into()).exit_code(), 2);
        assert_eq!(CliError::Data("x".into()).exit_code(), 3);
        assert_eq!(CliError::io("p", io::Error::other("x")).exit_code(), 3);
        assert_eq!(CliError::from(E::Checkpoint("x".into())).exit_code(), 3);
        assert_eq!(CliError::from(E::Degenerate("x".into())).exit_code(), 4);
        assert_eq!(CliError::from(E::UndefinedMetric("x".into())).exit_code(), 4);
    }
}
