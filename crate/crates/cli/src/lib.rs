//! Front end for `mimo-spatia`: config parsing, CSV and manifest output.

pub mod app;
pub mod config;
pub mod output;

pub use app::{dispatch, selftest, Failure};
pub use config::{parse_config, ConfigError};
