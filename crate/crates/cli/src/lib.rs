//! Command-line harness: experiment configuration, deterministic
//! replicate-parallel runs, manifests and reports.

pub mod config;
pub mod error;
pub mod manifest;
pub mod report;
pub mod run;

pub use config::{Command, ExperimentConfig};
pub use error::CliError;
pub use manifest::RunManifest;
pub use report::emit_report;
pub use run::{run_experiment, RunOutcome};
