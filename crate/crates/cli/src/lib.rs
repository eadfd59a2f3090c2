//! Command-line workflow around `hydride-core`.

pub mod config;
pub mod pipeline;

pub use config::{CiKind, ConfigError, RunConfig};
pub use pipeline::{exit_code, Failure, TOOL_VERSION};
