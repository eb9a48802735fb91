//! Files, datasets, training pipeline and benchmark harness around
//! [`doe_core`].
//!
//! The `doe` binary drives the full workflow:
//!
//! ```text
//! doe generate-data --out run/          # snapshots of the bundled feeder
//! doe train --out run/                  # four surrogates per architecture
//! doe solve --out run/ --method B1      # envelopes for the stress day
//! doe benchmark --out run/              # B0..B4 side by side, report.md
//! ```

pub mod bench;
pub mod clock;
pub mod config;
pub mod dataset;
pub mod feeder_file;
pub mod model_file;
pub mod report;
pub mod results;
pub mod scenario;
pub mod training;

use std::path::{Path, PathBuf};

pub use clock::InstantClock;
pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: malformed file: {reason}")]
    MalformedFile { path: PathBuf, reason: String },
    #[error("dataset was generated for feeder {found}, not {expected}")]
    FingerprintMismatch { expected: String, found: String },
    #[error(transparent)]
    Grid(#[from] doe_core::grid::GridError),
    #[error(transparent)]
    Model(#[from] doe_core::icnn::IcnnError),
}

impl FileError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn json(path: &Path, source: serde_json::Error) -> Self {
        Self::Json {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn malformed(path: &Path, reason: impl Into<String>) -> Self {
        Self::MalformedFile {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }
}

/// Writes `bytes`, creating parent directories.
pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), FileError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| FileError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| FileError::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, FileError> {
    let text = std::fs::read_to_string(path).map_err(|e| FileError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| FileError::json(path, e))
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), FileError> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    write_file(path, text.as_bytes())
}
