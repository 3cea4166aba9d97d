//! Run configuration: a TOML file with nested blocks, every value overridable by flags.

use std::fmt;
use std::path::{Path, PathBuf};

use nll_core::{
    check_far_lq, make_anisotropic_kernel, make_fractional_kernel, make_table_kernel, FieldSpec,
    Kernel, KernelParams, QuadratureConfig,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    OperatorEval,
    CutoffVerify,
    PairingCheck,
    MassScan,
    Classify,
    Iterate,
    CriticalSplit,
    Sharpness,
    FullSuite,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::OperatorEval => "operator-eval",
            Self::CutoffVerify => "cutoff-verify",
            Self::PairingCheck => "pairing-check",
            Self::MassScan => "mass-scan",
            Self::Classify => "classify",
            Self::Iterate => "iterate",
            Self::CriticalSplit => "critical-split",
            Self::Sharpness => "sharpness",
            Self::FullSuite => "full-suite",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Problem {
    pub n: Option<usize>,
    pub s: Option<f64>,
    pub q: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum KernelChoice {
    #[default]
    Fractional,
    /// `a(theta) = lambda + (Lambda - lambda) cos^2(theta)`, theta measured from the first axis.
    Anisotropic,
    CustomTable,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelBlock {
    pub kind: KernelChoice,
    pub lambda: Option<f64>,
    #[serde(rename = "Lambda")]
    pub big_lambda: Option<f64>,
    /// CSV file of `(angle, value)` rows for `custom-table`.
    pub table: Option<PathBuf>,
    /// Inline alternative to `table`.
    pub profile: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorBlock {
    pub field: Option<FieldSpec>,
    pub points: Vec<Vec<f64>>,
    /// Extra points drawn uniformly from `[-extent, extent]^n` with the run seed.
    pub samples: usize,
    pub extent: f64,
}

impl Default for OperatorBlock {
    fn default() -> Self {
        Self {
            field: None,
            points: Vec::new(),
            samples: 0,
            extent: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutoffBlock {
    pub scales: Vec<f64>,
}

impl Default for CutoffBlock {
    fn default() -> Self {
        Self {
            scales: vec![1.0, 2.0, 4.0, 8.0, 16.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub f: FieldSpec,
    pub g: FieldSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairingBlock {
    /// Defaults to two disjoint and two overlapping bump pairs.
    pub pairs: Vec<PairSpec>,
    pub domain_radius: f64,
}

impl Default for PairingBlock {
    fn default() -> Self {
        Self {
            pairs: Vec::new(),
            domain_radius: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MassBlock {
    pub field: Option<FieldSpec>,
    pub base_radius: f64,
    pub doublings: u32,
    pub kmax: u32,
}

impl Default for MassBlock {
    fn default() -> Self {
        Self {
            field: None,
            base_radius: 1.0,
            doublings: 6,
            kmax: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterateBlock {
    pub c0: f64,
    pub cbar: f64,
    pub max_steps: usize,
}

impl Default for IterateBlock {
    fn default() -> Self {
        Self {
            c0: 1.0,
            cbar: 1.0,
            max_steps: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticalBlock {
    pub field: Option<FieldSpec>,
    pub rho: f64,
}

impl Default for CriticalBlock {
    fn default() -> Self {
        Self {
            field: None,
            rho: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SharpnessBlock {
    pub safety: f64,
    /// Defaults to `{0}` plus 24 log-spaced radii in `[0.1, 100]`.
    pub radii: Option<Vec<f64>>,
}

impl Default for SharpnessBlock {
    fn default() -> Self {
        Self {
            safety: 0.5,
            radii: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<Scenario>,
    pub problem: Problem,
    pub kernel: KernelBlock,
    pub quadrature: QuadratureConfig,
    pub output: PathBuf,
    pub seed: u64,
    pub operator: OperatorBlock,
    pub cutoff: CutoffBlock,
    pub pairing: PairingBlock,
    pub mass: MassBlock,
    pub iterate: IterateBlock,
    pub critical: CriticalBlock,
    pub sharpness: SharpnessBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            problem: Problem::default(),
            kernel: KernelBlock::default(),
            quadrature: QuadratureConfig::default(),
            output: PathBuf::from("nll-out"),
            seed: 0,
            operator: OperatorBlock::default(),
            cutoff: CutoffBlock::default(),
            pairing: PairingBlock::default(),
            mass: MassBlock::default(),
            iterate: IterateBlock::default(),
            critical: CriticalBlock::default(),
            sharpness: SharpnessBlock::default(),
        }
    }
}

/// A configuration problem, located by its dotted field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Values a scenario may rely on after validation.
#[derive(Debug, Clone, Copy)]
pub struct Resolved {
    pub n: usize,
    pub s: f64,
    pub q: Option<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let path = e.span().map_or("config".to_string(), |sp| {
                format!("config (bytes {}..{})", sp.start, sp.end)
            });
            ConfigError::new(path, e.message().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("--config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    fn require<T: Copy>(value: Option<T>, path: &str) -> Result<T, ConfigError> {
        value.ok_or_else(|| ConfigError::new(path, "required by this scenario but missing"))
    }

    /// Checks everything the selected scenario needs before any computation starts.
    pub fn validate(&self) -> Result<(Scenario, Option<Resolved>), ConfigError> {
        let scenario = self
            .scenario
            .ok_or_else(|| ConfigError::new("scenario", "no scenario selected"))?;
        self.quadrature
            .validate()
            .map_err(|e| ConfigError::new("quadrature", e.to_string()))?;
        if scenario == Scenario::FullSuite {
            return Ok((scenario, None));
        }
        let n = Self::require(self.problem.n, "problem.n")?;
        if !(1..=3).contains(&n) {
            return Err(ConfigError::new(
                "problem.n",
                format!("n = {n} not in 1..=3"),
            ));
        }
        let s = Self::require(self.problem.s, "problem.s")?;
        if !(s > 0.0 && s < 1.0) {
            return Err(ConfigError::new(
                "problem.s",
                format!("s = {s} not in (0, 1)"),
            ));
        }
        let needs_q = matches!(
            scenario,
            Scenario::MassScan
                | Scenario::Classify
                | Scenario::Iterate
                | Scenario::CriticalSplit
                | Scenario::Sharpness
        );
        let q = if needs_q {
            let q = Self::require(self.problem.q, "problem.q")?;
            if !(q > 1.0 && q.is_finite()) {
                return Err(ConfigError::new(
                    "problem.q",
                    format!("q = {q} must be > 1"),
                ));
            }
            Some(q)
        } else {
            self.problem.q
        };
        let field_for = |f: &Option<FieldSpec>, path: &str| -> Result<(), ConfigError> {
            let spec = f
                .as_ref()
                .ok_or_else(|| ConfigError::new(path, "required by this scenario but missing"))?;
            spec.build(n, s)
                .map(|_| ())
                .map_err(|e| ConfigError::new(path, e.to_string()))
        };
        match scenario {
            Scenario::OperatorEval => {
                field_for(&self.operator.field, "operator.field")?;
                if self.operator.points.is_empty() && self.operator.samples == 0 {
                    return Err(ConfigError::new(
                        "operator.points",
                        "give at least one point or a positive operator.samples",
                    ));
                }
                if let Some(i) = self.operator.points.iter().position(|p| p.len() != n) {
                    return Err(ConfigError::new(
                        format!("operator.points[{i}]"),
                        format!("expected {n} coordinates"),
                    ));
                }
                if !(self.operator.extent > 0.0) {
                    return Err(ConfigError::new("operator.extent", "must be positive"));
                }
            }
            Scenario::CutoffVerify => {
                if self.cutoff.scales.is_empty() || self.cutoff.scales.iter().any(|r| !(*r >= 1.0))
                {
                    return Err(ConfigError::new(
                        "cutoff.scales",
                        "need a non-empty list of scales >= 1",
                    ));
                }
            }
            Scenario::PairingCheck => {
                for (i, p) in self.pairing.pairs.iter().enumerate() {
                    for (spec, side) in [(&p.f, "f"), (&p.g, "g")] {
                        let u = spec.build(n, s).map_err(|e| {
                            ConfigError::new(format!("pairing.pairs[{i}].{side}"), e.to_string())
                        })?;
                        if u.support().is_none() {
                            return Err(ConfigError::new(
                                format!("pairing.pairs[{i}].{side}"),
                                "pairing needs compactly supported fields",
                            ));
                        }
                    }
                }
            }
            Scenario::MassScan => {
                field_for(&self.mass.field, "mass.field")?;
                if !(self.mass.base_radius >= 1.0) {
                    return Err(ConfigError::new("mass.base_radius", "must be >= 1"));
                }
            }
            Scenario::Iterate => {
                if !(self.iterate.c0 > 0.0) {
                    return Err(ConfigError::new("iterate.c0", "must be positive"));
                }
                if !(self.iterate.cbar > 0.0) {
                    return Err(ConfigError::new("iterate.cbar", "must be positive"));
                }
                if self.iterate.max_steps < 1 {
                    return Err(ConfigError::new("iterate.max_steps", "must be >= 1"));
                }
            }
            Scenario::CriticalSplit => {
                field_for(&self.critical.field, "critical.field")?;
                let u = self.critical.field.as_ref().expect("checked").build(n, s);
                if let (Ok(u), Some(q)) = (u, q) {
                    check_far_lq(&u, q)
                        .map_err(|e| ConfigError::new("critical.field", e.to_string()))?;
                }
                if !(self.critical.rho > 0.0) {
                    return Err(ConfigError::new("critical.rho", "must be positive"));
                }
            }
            Scenario::Sharpness => {
                let safety = self.sharpness.safety;
                if !(safety > 0.0 && safety <= 1.0) {
                    return Err(ConfigError::new("sharpness.safety", "must lie in (0, 1]"));
                }
                if let Some(r) = &self.sharpness.radii {
                    if r.is_empty() || r.iter().any(|v| !(*v >= 0.0)) {
                        return Err(ConfigError::new(
                            "sharpness.radii",
                            "need non-negative radii",
                        ));
                    }
                }
            }
            Scenario::Classify | Scenario::FullSuite => {}
        }
        self.kernel(n, s)?;
        Ok((scenario, Some(Resolved { n, s, q })))
    }

    pub fn kernel(&self, n: usize, s: f64) -> Result<Kernel, ConfigError> {
        let kb = &self.kernel;
        let params = || -> Result<KernelParams, ConfigError> {
            let lambda = Self::require(kb.lambda, "kernel.lambda")?;
            let big = Self::require(kb.big_lambda, "kernel.Lambda")?;
            KernelParams::new(n, s, lambda, big)
                .map_err(|e| ConfigError::new("kernel", e.to_string()))
        };
        match kb.kind {
            KernelChoice::Fractional => {
                make_fractional_kernel(n, s).map_err(|e| ConfigError::new("kernel", e.to_string()))
            }
            KernelChoice::Anisotropic => {
                let p = params()?;
                let (lo, hi) = (p.lambda, p.big_lambda);
                make_anisotropic_kernel(p, move |d: &[f64]| lo + (hi - lo) * d[0] * d[0])
                    .map_err(|e| ConfigError::new("kernel", e.to_string()))
            }
            KernelChoice::CustomTable => {
                let p = params()?;
                let table = match (&kb.profile, &kb.table) {
                    (Some(rows), _) => rows.iter().map(|r| (r[0], r[1])).collect(),
                    (None, Some(path)) => read_table(path)?,
                    (None, None) => {
                        return Err(ConfigError::new(
                            "kernel.table",
                            "custom-table needs a table or profile",
                        ))
                    }
                };
                make_table_kernel(p, &table).map_err(|e| ConfigError::new("kernel", e.to_string()))
            }
        }
    }
}

fn read_table(path: &Path) -> Result<Vec<(f64, f64)>, ConfigError> {
    let err = |e: csv::Error| ConfigError::new("kernel.table", format!("{}: {e}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(err)?;
    reader
        .deserialize::<(f64, f64)>()
        .map(|r| r.map_err(err))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_q_names_the_field() {
        let cfg =
            RunConfig::from_toml("scenario = \"classify\"\n[problem]\nn = 3\ns = 0.5\n").unwrap();
        let e = cfg.validate().unwrap_err();
        assert_eq!(e.path, "problem.q");
    }

    #[test]
    fn nested_blocks_parse() {
        let text = r#"
scenario = "mass-scan"
seed = 7
[problem]
n = 1
s = 0.25
q = 1.5
[quadrature]
tol = 1e-7
[mass]
field = { kind = "power", beta = 2.0, c = 1.0 }
doublings = 3
"#;
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg.quadrature.tol, 1e-7);
        assert_eq!(cfg.quadrature.angular, QuadratureConfig::default().angular);
        assert_eq!(cfg.mass.doublings, 3);
        assert_eq!(cfg.mass.kmax, 40);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[problem]\nm = 3\n").is_err());
    }

    #[test]
    fn table_kernel_needs_bounds() {
        let mut cfg = RunConfig::default();
        cfg.kernel.kind = KernelChoice::CustomTable;
        cfg.kernel.profile = Some(vec![[0.0, 1.0]]);
        assert_eq!(cfg.kernel(1, 0.5).unwrap_err().path, "kernel.lambda");
        cfg.kernel.lambda = Some(0.5);
        cfg.kernel.big_lambda = Some(2.0);
        assert!(cfg.kernel(1, 0.5).is_ok());
    }
}
