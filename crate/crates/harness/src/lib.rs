//! Config-driven experiment harness for the federated unlearning-recovery
//! simulator: pipeline orchestration, ablation and k-sensitivity sweeps,
//! and report emission. The `frs` binary is a thin CLI over this crate.

pub mod ablation;
pub mod config;
pub mod ksweep;
pub mod pipeline;
pub mod report;
pub mod stages;

pub use config::ExperimentConfig;
pub use pipeline::{run_pipeline, run_pipeline_from_config};
