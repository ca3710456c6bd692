use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library. The CLI maps each variant onto an exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported manifest version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("missing or corrupt image for sample {index}: {reason}")]
    Image { index: u64, reason: String },

    #[error("config mismatch: manifest digest {stored} does not match embedded config digest {computed}")]
    ConfigMismatch { stored: String, computed: String },

    #[error("malformed data: {0}")]
    Data(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric divergence: {0}")]
    Divergence(String),

    #[error("occlusion scene unsatisfiable after {attempts} attempts")]
    Occlusion { attempts: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
