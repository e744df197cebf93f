use std::path::Path;

use crate::archive::ArchiveError;
use crate::config::{MergeError, ParseError};
use crate::data::DataError;
use crate::registry::ConfigurationError;
use crate::tensor::TensorError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Configuration(#[from] ConfigurationError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid overrides: {0}")]
    Merge(#[from] MergeError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    pub(crate) fn io_path(action: &str, path: &Path, source: std::io::Error) -> Self {
        Error::Io { context: format!("could not {action} '{}'", path.display()), source }
    }

    /// True for errors that stem from an invalid experiment configuration,
    /// including syntax errors in the configuration text itself.
    pub fn is_configuration(&self) -> bool {
        matches!(self, Error::Configuration(_) | Error::Parse(_) | Error::Merge(_))
    }
}
