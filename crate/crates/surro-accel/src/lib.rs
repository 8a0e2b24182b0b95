//! Std companion of `surro-accel-core`: JSON configuration, trajectory,
//! weight, surrogate and report files, CSV learning curves, multi-seed
//! experiment runner, and the `surro-accel` command-line tool.

pub mod config;
pub mod files;
pub mod runner;

use std::path::PathBuf;

/// Failure classes that map onto process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// Bad configuration or arguments (exit 1).
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Anything that went wrong while running (exit 2).
    #[error("{0}")]
    Runtime(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Io { .. } | Self::Runtime(_) => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<surro_accel_core::ConfigError> for AppError {
    fn from(e: surro_accel_core::ConfigError) -> Self {
        Self::Validation(e.to_string())
    }
}

pub type Result<T, E = AppError> = std::result::Result<T, E>;
