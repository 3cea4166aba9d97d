//! Plot-ready CSV series. Rendering is left to the user.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::report::RunReport;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub m: usize,
    pub gamma: f64,
    #[serde(rename = "C")]
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    #[serde(rename = "R")]
    pub r: f64,
    /// `S(R) / R^n`
    pub normalized_mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffRow {
    #[serde(rename = "R")]
    pub r: f64,
    pub inner_constant: f64,
    pub outer_constant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub r: f64,
    pub margin: f64,
    pub error_budget: f64,
}

/// Series gathered during a run; `None` means the scenario did not produce it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotData {
    pub trace: Option<Vec<TraceRow>>,
    pub growth: Option<Vec<GrowthRow>>,
    pub cutoff: Option<Vec<CutoffRow>>,
    pub margins: Option<Vec<MarginRow>>,
}

pub(crate) fn write_rows<T: Serialize>(
    path: &Path,
    header: &[&str],
    rows: &[T],
) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

/// Writes one CSV per available series into `dir` and returns the paths.
pub fn emit_plot_data(report: &RunReport, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    let p = &report.plot;
    if let Some(rows) = &p.trace {
        let path = dir.join("gamma_vs_m.csv");
        write_rows(&path, &["m", "gamma", "C"], rows)?;
        out.push(path);
    }
    if let Some(rows) = &p.growth {
        let path = dir.join("mass_growth.csv");
        write_rows(&path, &["R", "normalized_mass"], rows)?;
        out.push(path);
    }
    if let Some(rows) = &p.cutoff {
        let path = dir.join("cutoff_constants.csv");
        write_rows(&path, &["R", "inner_constant", "outer_constant"], rows)?;
        out.push(path);
    }
    if let Some(rows) = &p.margins {
        let path = dir.join("sharpness_margins.csv");
        write_rows(&path, &["r", "margin", "error_budget"], rows)?;
        out.push(path);
    }
    Ok(out)
}
