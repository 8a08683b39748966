//! Library side of the `hb` command: configuration, manifests and the
//! subcommands, each returning the process exit code.

pub mod commands;
pub mod config;
pub mod manifest;

use serde::{Deserialize, Serialize};

pub use commands::{cmd_report, cmd_sample, cmd_solve, cmd_validate, cmd_verify, RunOptions};
pub use config::ExperimentConfig;
pub use manifest::RunManifest;

pub mod exit {
    pub const OK: i32 = 0;
    pub const INVALID: i32 = 1;
    pub const PARSE: i32 = 2;
    pub const NOT_CONVERGED: i32 = 3;
    /// Statistical check failed, or re-run digests differ.
    pub const CHECK_FAILED: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] hermite_burgers::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => exit::PARSE,
            _ => exit::INVALID,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Bin,
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Bin => "bin",
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum VerifyCheck {
    Covariance,
    Isometry,
    Scaling,
    Holder,
    Moments,
}

impl VerifyCheck {
    pub fn as_str(self) -> &'static str {
        match self {
            VerifyCheck::Covariance => "covariance",
            VerifyCheck::Isometry => "isometry",
            VerifyCheck::Scaling => "scaling",
            VerifyCheck::Holder => "holder",
            VerifyCheck::Moments => "moments",
        }
    }
}
