//! Experiment orchestration for the echo cancellation benchmark: seeded
//! scene batches, named processing pipelines, scoring, tables and feature
//! export for external mask estimators.

pub mod config;
pub mod experiment;
pub mod features;
pub mod pipelines;
pub mod scenes;
pub mod tables;

pub use config::{ExperimentConfig, MaskOrigin, NamedRoom, Pipeline};
pub use experiment::{run_experiment, ExperimentResult, ResultRow, SceneScore};
