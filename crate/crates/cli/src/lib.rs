//! Command-line front end for terrace experiments: scenario configs,
//! subcommand pipelines and run manifests.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod runner;

pub use commands::{run_command, Command, Context, Report};
pub use config::ScenarioConfig;
pub use error::{CliError, CliResult};
pub use manifest::{CheckOutcome, RunManifest, Status};
