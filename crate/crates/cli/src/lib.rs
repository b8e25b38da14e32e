//! Config-driven experiment runner for mimicking martingales.
//!
//! Exit codes: 0 when every requested check passes, 1 when any check rejects,
//! 2 on configuration or runtime errors.

pub mod commands;
pub mod config;
pub mod runner;
pub mod svg;

use thiserror::Error;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_REJECT: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] mimicry_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
