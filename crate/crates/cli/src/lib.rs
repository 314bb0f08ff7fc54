//! Command-line driver: dataset synthesis, fuser training, evaluation,
//! frugal sweeps, analysis and manifest-driven experiments.

pub mod commands;
pub mod error;
pub mod manifest;
pub mod output;
pub mod pipeline;

pub use commands::{execute, Cli};
pub use error::{CliError, CliResult};
pub use manifest::{run_manifest, ExperimentManifest, RunArtifacts};
