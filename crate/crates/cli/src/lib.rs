//! Subcommands of the `onlinefilter` binary, usable as a library so tests can
//! drive whole experiments in-process.

pub mod commands;
pub mod config;

pub use config::{Purpose, RunConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or configuration; nothing was touched.
    #[error("{}", .0.join("\nerror: "))]
    Config(Vec<String>),
    /// Failure while doing the work.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(vec![msg.into()])
    }

    pub fn runtime(msg: impl std::fmt::Display) -> Self {
        CliError::Runtime(msg.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}
