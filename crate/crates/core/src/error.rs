// Copyright 2026 polarlandscape Contributors
// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LandscapeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("degenerate singular probe: {0}")]
    DegenerateProbe(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("i/o failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to write results to {path}: {message}")]
    Output { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, LandscapeError>;

pub(crate) fn invalid(msg: impl Into<String>) -> LandscapeError {
    LandscapeError::InvalidArgument(msg.into())
}
