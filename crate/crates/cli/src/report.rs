use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::plot::PlotData;

pub const SCHEMA: &str = "nll-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    /// Nothing to measure (e.g. an identically zero field).
    Degenerate,
    /// Outside the certified setting; reported but never fails the run.
    Exploratory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, status: Status, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status,
            detail: detail.into(),
        }
    }

    pub fn verdict(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        Self::new(name, if ok { Status::Pass } else { Status::Fail }, detail)
    }

    /// A check whose computation itself failed.
    pub fn error(name: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Self::new(name, Status::Fail, format!("error: {err}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub tool_version: String,
    pub scenario: String,
    pub config: RunConfig,
    pub checks: Vec<Check>,
    /// CSV files written, relative to the output directory.
    pub artifacts: Vec<String>,
    pub stages: Vec<Stage>,
    /// Scenario-specific results (traces, calibrated constants, ...).
    pub summary: serde_json::Value,
    #[serde(skip)]
    pub plot: PlotData,
}

impl RunReport {
    pub fn new(scenario: &str, config: RunConfig) -> Self {
        Self {
            schema: SCHEMA.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            scenario: scenario.to_string(),
            config,
            checks: Vec::new(),
            artifacts: Vec::new(),
            stages: Vec::new(),
            summary: serde_json::Value::Null,
            plot: PlotData::default(),
        }
    }

    pub fn failed(&self) -> bool {
        self.checks.iter().any(|c| c.status == Status::Fail)
    }
}
