//! Config-driven experiment runner, edge-list ingestion, scree output and
//! the CSV/JSON/SVG writers behind the `scce` binary.

pub mod config;
pub mod ingest;
pub mod output;
pub mod runner;
pub mod scree;
pub mod svg;

pub use config::{ExperimentConfig, ExperimentKind, ModelKind};
pub use runner::{run_experiment, RunOutput};
