//! Command-line front end: run configs, scenario pipelines and machine-readable reports.

pub mod config;
pub mod plot;
pub mod report;
pub mod run;

pub use config::{ConfigError, RunConfig, Scenario};
pub use plot::emit_plot_data;
pub use report::{Check, RunReport, Status, SCHEMA};
pub use run::{run, RunError};
