//! Desk-scale experiments for adaptive gradient regularization.
//!
//! * [`config`]: flat TOML experiment files.
//! * [`data`]: blobs and moons generators, CSV ingestion.
//! * [`train`]: seeded training loops, paired AGR on/off runs, JSONL records.
//! * [`bench`]: AGR overhead per training step.
//! * [`cli`]: the `agr` command line.

pub mod bench;
pub mod cli;
pub mod config;
pub mod data;
pub mod train;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Nn(#[from] agr_core::nn::NnError),
    #[error(transparent)]
    Optim(#[from] agr_core::optim::OptimError),
    #[error(transparent)]
    Tensor(#[from] agr_core::tensor::TensorError),
    #[error(transparent)]
    Verify(#[from] agr_core::verify::VerifyError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// 2 for bad input (config, data, arguments), 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Data(_) | HarnessError::Invalid(_) => 2,
            HarnessError::Verify(agr_core::verify::VerifyError::InvalidConfig(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
