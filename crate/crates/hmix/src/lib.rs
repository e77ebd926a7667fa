//! Experiment driver for `hmix-core`: JSON configuration, CSV/JSON outputs,
//! run manifests, deterministic parallel sweeps and the `hmix` command line.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod parallel;
pub mod selftest;

pub use cli::dispatch;
pub use config::{load_model, ModelConfig};
pub use error::CliError;
pub use output::RunManifest;
