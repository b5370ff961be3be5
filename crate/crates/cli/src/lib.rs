//! Experiment harness around `aga_core`: suite generation, tracker
//! variants, evaluation and the window sweep, as a library and as the `aga`
//! binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

pub use config::{ExperimentConfig, KindSelection, Overrides, SuiteConfig, VariantConfig, VideoSpec};
pub use error::{CliError, Result};
