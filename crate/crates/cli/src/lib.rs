//! Configuration, input, and output handling for the `ihte` experiment runner.

pub mod config;
pub mod error;
pub mod ingest;
pub mod output;
pub mod run;

pub use config::ExperimentConfig;
pub use error::CliError;
