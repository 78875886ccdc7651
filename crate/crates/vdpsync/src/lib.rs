//! IO, configuration and command-line layer over `vdpsync-core`.

pub mod cache;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod output;
pub mod parallel;
pub mod plot;

pub use cache::Cache;
pub use config::ConfigFile;
pub use error::{CliError, CliResult};
pub use parallel::optimize_schedule_par;
