//! Command-line pipeline for the speaker verification toolkit: text file
//! formats, configuration and one subcommand per pipeline stage.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;

pub use commands::{run, Cli};
pub use config::PipelineConfig;
pub use error::{CliError, CliResult};
