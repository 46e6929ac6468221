//! Configuration parsing and experiment orchestration behind the `bcc`
//! command-line tool.

pub mod config;
pub mod format;
pub mod run;

pub use config::{parse_config, ConfigError, ExperimentConfig, RawConfig, Subcommand, SEED_ENV};
pub use run::{run, Report};
