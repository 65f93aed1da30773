//! Batch pipeline behind the `biosession` binary: ingest a directory of
//! session files, preprocess, extract features, run the statistical
//! analyses and the clustering, and write a reproducible report bundle.

pub mod analysis;
pub mod app;
pub mod bundle;
pub mod config;
pub mod corpus;
pub mod format;
pub mod report;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{failed} of {total} sessions failed, above the allowed share")]
    PartialFailure { failed: usize, total: usize },
    #[error("incomplete bundle: missing {0}")]
    IncompleteBundle(String),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::IncompleteBundle(_) | CliError::Io { .. } => 2,
            CliError::PartialFailure { .. } => 3,
        }
    }

    pub(crate) fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}
