//! Experiment runner for the viscoflow laboratory: configuration, the run
//! pipeline, sweeps, single-purpose tools and their file formats.

pub mod config;
pub mod error;
pub mod manifest;
pub mod output;
pub mod run;
pub mod sweep;
pub mod tools;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use manifest::RunManifest;
