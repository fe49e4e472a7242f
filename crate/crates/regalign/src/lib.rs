//! Batch workflows around `regalign-core`: corpus files, data files, mask
//! loading, the evaluation runner, dataset forging, and two-stage
//! region-first inference against a model endpoint.

use std::path::{Path, PathBuf};

pub mod config;
pub mod corpus;
pub mod cot;
pub mod data;
pub mod eval;
pub mod forge;
pub mod masks;
pub mod segmenter;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("write failed: {0}")]
    Write(#[source] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}:{line}: {message}")]
    Data {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Mask(String),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn data(path: &Path, line: usize, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }
}

/// Refuses to write an output over one of the inputs.
pub fn ensure_distinct(output: &Path, inputs: &[&Path]) -> Result<(), Error> {
    let canon = |p: &Path| std::fs::canonicalize(p).ok();
    let Some(out) = canon(output) else {
        return Ok(());
    };
    if inputs
        .iter()
        .any(|i| canon(i).as_deref() == Some(out.as_path()))
    {
        return Err(Error::Config(format!(
            "output {} would overwrite an input file",
            output.display()
        )));
    }
    Ok(())
}
