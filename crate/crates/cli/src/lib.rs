//! Batch orchestration for the itinerant-network experiments: a JSON
//! configuration, the three training steps, the analyses, and the files
//! they write.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{analyze, run_all, step1, step2, step3, Analysis};
pub use config::ExperimentConfig;
pub use error::CliError;
