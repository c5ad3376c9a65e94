//! Command-line companion to `fedldpc-core`: configuration files, on-disk
//! formats, a thread-pool executor and the command implementations.

pub mod app;
pub mod config;
pub mod exec;
pub mod formats;
pub mod validate;

pub use app::AppError;
pub use config::{ExperimentConfig, Overrides};
pub use exec::RayonExecutor;
