use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Structural problem in a manifest. `index` names the offending layer when known.
    #[error("manifest error{}: {message}", .index.map(|i| format!(" at layer {i}")).unwrap_or_default())]
    Manifest {
        index: Option<usize>,
        message: String,
    },

    #[error("shape error at layer {index}: {message}")]
    Shape { index: usize, message: String },

    #[error("weight bundle error for layer {layer}: {message}")]
    Weights { layer: usize, message: String },

    #[error("{0}")]
    Invalid(String),

    #[error("accumulator overflow: |{value}| does not fit {bits} bits")]
    AccumulatorOverflow { value: i128, bits: u32 },

    #[error("raw value {raw} does not fit a {width}-bit word")]
    RawOutOfRange { raw: i64, width: u32 },

    #[error("model does not fit the device: {0}")]
    DoesNotFit(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn manifest(index: impl Into<Option<usize>>, message: impl Into<String>) -> Self {
        Error::Manifest {
            index: index.into(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::Invalid(message.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
