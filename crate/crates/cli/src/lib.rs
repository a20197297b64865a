//! Command-line front end for lumadim: configuration, frame ingestion and
//! the `analyze`, `optimize`, `baseline`, `simulate`, `calibrate` and
//! `power-report` commands.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{run, Command, Status};
pub use config::{Overrides, RunConfig};
pub use error::CliError;
