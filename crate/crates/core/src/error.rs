use thiserror::Error;

use crate::contrast_lab::LabError;
use crate::corpus::CorpusError;
use crate::debias::DebiasError;
use crate::embed_store::StoreError;
use crate::geometry::GeometryError;
use crate::linguistics::LinguisticsError;
use crate::metrics::MetricsError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Linguistics(#[from] LinguisticsError),
    #[error(transparent)]
    Debias(#[from] DebiasError),
    #[error(transparent)]
    Lab(#[from] LabError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Json { .. } => ErrorKind::Config,
            Error::Geometry(e) if e.is_numeric() => ErrorKind::Numeric,
            Error::Debias(DebiasError::Geometry(e)) if e.is_numeric() => ErrorKind::Numeric,
            Error::Lab(LabError::InvalidConfig(_) | LabError::InvalidDistribution(_)) => ErrorKind::Config,
            Error::Lab(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }
}
