//! Scenario pipelines. Computational errors become failed checks; only configuration
//! problems and filesystem errors abort a run.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use nll_core::iteration::fixed_point;
use nll_core::operator::cutoff_lp_integral;
use nll_core::sharpness::{calibrate_c_with, default_radii, pointwise_margin_with};
use nll_core::{
    bubble, calibrate_c, classify, cosine, critical_scan, iterate_exponents,
    make_fractional_kernel, mass, pairing, pointwise_margin, power_decay, pv_integrate,
    verify_cutoff_bound, verify_dyadic_inequality, CutoffFamily, FieldSpec, Kernel, KernelKind,
    KernelParams, QuadratureConfig, Regime, RegimeInput, SharpnessProfile,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{ConfigError, PairSpec, Resolved, RunConfig, Scenario};
use crate::plot::{self, CutoffRow, GrowthRow, MarginRow, TraceRow};
use crate::report::{Check, RunReport, Stage, Status};

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Io(std::io::Error),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(e) => write!(f, "invalid config: {e}"),
            Self::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.into())
    }
}

/// Output directory plus the artifact list of the report being built.
struct Sink<'a> {
    dir: &'a Path,
    report: &'a mut RunReport,
}

impl Sink<'_> {
    fn csv<T: Serialize>(
        &mut self,
        name: &str,
        header: &[String],
        rows: &[T],
    ) -> Result<(), RunError> {
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        plot::write_rows(&self.dir.join(name), &header, rows)?;
        self.report.artifacts.push(name.to_string());
        Ok(())
    }

    fn check(&mut self, check: Check) {
        self.report.checks.push(check);
    }

    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> T) -> T {
        let start = Instant::now();
        let out = f(self);
        self.report.stages.push(Stage {
            name: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn coord_header(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

fn spread(v: &[f64]) -> f64 {
    nll_core::operator::spread(v)
}

/// Validates, runs the scenario, writes CSV artifacts, plot data and `report.json`.
pub fn run(cfg: &RunConfig) -> Result<RunReport, RunError> {
    let (scenario, resolved) = cfg.validate()?;
    std::fs::create_dir_all(&cfg.output)?;
    let mut report = RunReport::new(scenario.as_str(), cfg.clone());
    {
        let mut sink = Sink {
            dir: &cfg.output,
            report: &mut report,
        };
        match (scenario, resolved) {
            (Scenario::FullSuite, _) => full_suite(&mut sink)?,
            (_, Some(r)) => {
                let k = cfg.kernel(r.n, r.s)?;
                sink.stage(scenario.as_str(), |sink| {
                    dispatch(scenario, cfg, r, &k, sink)
                })?;
            }
            (_, None) => unreachable!("validation resolves the problem block"),
        }
    }
    let plot_dir = cfg.output.join("plot");
    for path in plot::emit_plot_data(&report, &plot_dir)? {
        let rel = path.strip_prefix(&cfg.output).unwrap_or(&path);
        report.artifacts.push(rel.to_string_lossy().into_owned());
    }
    let text = serde_json::to_string_pretty(&report).map_err(std::io::Error::from)?;
    std::fs::write(cfg.output.join("report.json"), text + "\n")?;
    Ok(report)
}

fn dispatch(
    scenario: Scenario,
    cfg: &RunConfig,
    r: Resolved,
    k: &Kernel,
    sink: &mut Sink,
) -> Result<(), RunError> {
    match scenario {
        Scenario::OperatorEval => operator_eval(cfg, r, k, sink),
        Scenario::CutoffVerify => cutoff_verify(cfg, r, k, sink),
        Scenario::PairingCheck => pairing_check(cfg, r, k, sink),
        Scenario::MassScan => mass_scan(cfg, r, k, sink),
        Scenario::Classify => {
            classify_check(r, sink);
            Ok(())
        }
        Scenario::Iterate => iterate(cfg, r, sink),
        Scenario::CriticalSplit => critical_split(cfg, r, k, sink),
        Scenario::Sharpness => sharpness(cfg, r, k, sink),
        Scenario::FullSuite => unreachable!("handled by run"),
    }
}

fn sample_points(cfg: &RunConfig, n: usize) -> Vec<Vec<f64>> {
    let mut points = cfg.operator.points.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let e = cfg.operator.extent;
    for _ in 0..cfg.operator.samples {
        points.push((0..n).map(|_| rng.random_range(-e..=e)).collect());
    }
    points
}

fn operator_eval(
    cfg: &RunConfig,
    r: Resolved,
    k: &Kernel,
    sink: &mut Sink,
) -> Result<(), RunError> {
    let spec = cfg.operator.field.as_ref().expect("validated");
    let u = spec
        .build(r.n, r.s)
        .map_err(|e| ConfigError::new("operator.field", e.to_string()))?;
    let points = sample_points(cfg, r.n);
    let results: Vec<_> = points
        .par_iter()
        .map(|x| pv_integrate(&u, k, x, &cfg.quadrature))
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut best_effort = false;
    for (x, res) in points.iter().zip(&results) {
        match res {
            Ok(q) => {
                best_effort |= q.best_effort;
                rows.push((x.clone(), q.value, q.error_estimate, String::new()));
            }
            Err(e) => {
                failures.push(format!("{x:?}: {e}"));
                rows.push((x.clone(), f64::NAN, f64::NAN, e.to_string()));
            }
        }
    }
    let mut header = coord_header(r.n);
    header.extend(strings(&["value", "error_estimate", "error"]));
    let flat: Vec<_> = rows
        .iter()
        .map(|(x, v, e, msg)| {
            let mut rec: Vec<String> = x.iter().map(|c| c.to_string()).collect();
            rec.extend([v.to_string(), e.to_string(), msg.clone()]);
            rec
        })
        .collect();
    sink.csv("operator.csv", &header, &flat)?;
    let status = if !failures.is_empty() {
        Status::Fail
    } else if best_effort {
        Status::Exploratory
    } else {
        Status::Pass
    };
    sink.check(Check::new("evaluation", status, {
        let mut d = format!(
            "{} of {} points evaluated",
            points.len() - failures.len(),
            points.len()
        );
        if !failures.is_empty() {
            d.push_str(&format!("; {}", failures.join("; ")));
        }
        d
    }));
    sink.report.summary = json!({
        "field": u.label(),
        "kernel": k.label(),
        "points": points.len(),
        "failures": failures,
    });
    Ok(())
}

fn cutoff_verify(
    cfg: &RunConfig,
    r: Resolved,
    k: &Kernel,
    sink: &mut Sink,
) -> Result<(), RunError> {
    let family = match CutoffFamily::new(r.n, 1.0) {
        Ok(f) => f,
        Err(e) => {
            for name in ["sample-failures", "inner-uniformity", "outer-uniformity"] {
                sink.check(Check::error(name, &e));
            }
            return Ok(());
        }
    };
    let reports = match verify_cutoff_bound(k, &family, &cfg.cutoff.scales, &cfg.quadrature) {
        Ok(r) => r,
        Err(e) => {
            for name in ["sample-failures", "inner-uniformity", "outer-uniformity"] {
                sink.check(Check::error(name, &e));
            }
            return Ok(());
        }
    };
    let mut header = strings(&["R", "region"]);
    header.extend(coord_header(r.n));
    header.extend(strings(&["value", "error_estimate", "normalized"]));
    let mut rows = Vec::new();
    for rep in &reports {
        for smp in &rep.samples {
            let mut rec = vec![
                rep.scale.to_string(),
                format!("{:?}", smp.region).to_lowercase(),
            ];
            rec.extend(smp.point.iter().map(|c| c.to_string()));
            rec.extend([
                smp.value.to_string(),
                smp.error_estimate.to_string(),
                smp.normalized.to_string(),
            ]);
            rows.push(rec);
        }
    }
    sink.csv("cutoff_samples.csv", &header, &rows)?;
    let failures: usize = reports.iter().map(|r| r.failures.len()).sum();
    sink.check(Check::verdict(
        "sample-failures",
        failures == 0,
        format!("{failures} failed samples"),
    ));
    let inner: Vec<f64> = reports.iter().map(|r| r.inner_constant).collect();
    let outer: Vec<f64> = reports.iter().map(|r| r.outer_constant).collect();
    let (si, so) = (spread(&inner), spread(&outer));
    sink.check(Check::verdict(
        "inner-uniformity",
        si <= 1.25,
        format!("max/min = {si:.6} (<= 1.25)"),
    ));
    sink.check(Check::verdict(
        "outer-uniformity",
        so <= 1.25,
        format!("max/min = {so:.6} (<= 1.25)"),
    ));
    sink.report.plot.cutoff = Some(
        reports
            .iter()
            .map(|r| CutoffRow {
                r: r.scale,
                inner_constant: r.inner_constant,
                outer_constant: r.outer_constant,
            })
            .collect(),
    );
    sink.report.summary = json!({
        "kernel": k.label(),
        "scales": cfg.cutoff.scales,
        "inner_constants": inner,
        "outer_constants": outer,
        "crossover_constants": reports.iter().map(|r| r.crossover_constant).collect::<Vec<_>>(),
    });
    Ok(())
}

/// Two disjoint and two overlapping bump pairs along the first axis.
fn default_pairs(n: usize) -> Vec<PairSpec> {
    let at = |c: f64| {
        let mut v = vec![0.0; n];
        v[0] = c;
        Some(v)
    };
    let bump = |scale: f64, c: f64| FieldSpec::Bump {
        scale,
        center: at(c),
    };
    vec![
        PairSpec {
            f: bump(1.0, 0.3),
            g: bump(0.5, 4.0),
        },
        PairSpec {
            f: bump(0.5, -2.5),
            g: bump(1.0, 2.0),
        },
        PairSpec {
            f: bump(1.0, 0.0),
            g: bump(1.0, 1.0),
        },
        PairSpec {
            f: bump(0.5, 0.0),
            g: bump(1.0, 0.5),
        },
    ]
}

#[derive(Serialize)]
struct PairRow {
    pair: usize,
    f: String,
    g: String,
    f_lg: f64,
    g_lf: f64,
    gap: f64,
    bound: f64,
    error_estimate: f64,
}

fn pairing_rows(
    k: &Kernel,
    pairs: &[PairSpec],
    n: usize,
    s: f64,
    cfg: &QuadratureConfig,
    domain: f64,
) -> nll_core::Result<Vec<PairRow>> {
    let mut rows = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        let (f, g) = (p.f.build(n, s)?, p.g.build(n, s)?);
        let fg = pairing(k, &f, &g, cfg, domain)?;
        let gf = pairing(k, &g, &f, cfg, domain)?;
        rows.push(PairRow {
            pair: i,
            f: f.label().to_string(),
            g: g.label().to_string(),
            f_lg: fg.value,
            g_lf: gf.value,
            gap: (fg.value - gf.value).abs(),
            bound: 1e-6 * fg.value.abs().max(1.0),
            error_estimate: fg.error_estimate + gf.error_estimate,
        });
    }
    Ok(rows)
}

fn pairing_check(
    cfg: &RunConfig,
    r: Resolved,
    k: &Kernel,
    sink: &mut Sink,
) -> Result<(), RunError> {
    let pairs = if cfg.pairing.pairs.is_empty() {
        default_pairs(r.n)
    } else {
        cfg.pairing.pairs.clone()
    };
    match pairing_rows(
        k,
        &pairs,
        r.n,
        r.s,
        &cfg.quadrature,
        cfg.pairing.domain_radius,
    ) {
        Ok(rows) => {
            let header = strings(&[
                "pair",
                "f",
                "g",
                "f_Lg",
                "g_Lf",
                "gap",
                "bound",
                "error_estimate",
            ]);
            sink.csv("pairing.csv", &header, &rows)?;
            let worst = rows.iter().map(|r| r.gap / r.bound).fold(0.0, f64::max);
            sink.check(Check::verdict(
                "symmetry",
                worst <= 1.0,
                format!("{} pairs, max gap / bound = {worst:.3e}", rows.len()),
            ));
        }
        Err(e) => sink.check(Check::error("symmetry", e)),
    }
    Ok(())
}

#[derive(Serialize)]
struct MassRow {
    #[serde(rename = "R")]
    r: f64,
    #[serde(rename = "S")]
    mass: f64,
    ratio: Option<f64>,
    remainder_bound: f64,
}

fn mass_scan(cfg: &RunConfig, r: Resolved, k: &Kernel, sink: &mut Sink) -> Result<(), RunError> {
    let q = r.q.expect("validated");
    let spec = cfg.mass.field.as_ref().expect("validated");
    let u = spec
        .build(r.n, r.s)
        .map_err(|e| ConfigError::new("mass.field", e.to_string()))?;
    let radii: Vec<f64> = (0..=cfg.mass.doublings)
        .map(|j| cfg.mass.base_radius * 2f64.powi(j as i32))
        .collect();
    match mass::verify_dyadic_inequality_with(
        &u,
        q,
        k.params(),
        &radii,
        cfg.mass.kmax,
        cfg.quadrature.angular,
    ) {
        Ok(check) => {
            let rows: Vec<MassRow> = check
                .rows
                .iter()
                .map(|row| MassRow {
                    r: row.radius,
                    mass: row.mass,
                    ratio: row.ratio,
                    remainder_bound: row.remainder_bound,
                })
                .collect();
            sink.csv(
                "mass.csv",
                &strings(&["R", "S", "ratio", "remainder_bound"]),
                &rows,
            )?;
            let degenerate = check
                .rows
                .iter()
                .all(|r| r.status == mass::DyadicStatus::Degenerate);
            let variation = check.variation.unwrap_or(f64::INFINITY);
            let status = if degenerate {
                Status::Degenerate
            } else if variation <= 10.0 {
                Status::Pass
            } else {
                Status::Fail
            };
            sink.check(Check::new(
                "dyadic-inequality",
                status,
                format!(
                    "ratio max/min = {variation:.4} (<= 10), a = {:.6}, b = {:.6}",
                    check.a, check.b
                ),
            ));
            let n = r.n as i32;
            sink.report.plot.growth = Some(
                check
                    .rows
                    .iter()
                    .map(|row| GrowthRow {
                        r: row.radius,
                        normalized_mass: row.mass / row.radius.powi(n),
                    })
                    .collect(),
            );
            sink.check(Check::verdict(
                "growth-bound",
                check.growth_sup.is_finite(),
                format!("sup S(r)/r^n = {:.6e}", check.growth_sup),
            ));
            sink.report.summary = json!({
                "field": u.label(),
                "a": check.a,
                "b": check.b,
                "constant": check.constant,
                "variation": check.variation,
            });
        }
        Err(e) => {
            sink.check(Check::error("dyadic-inequality", &e));
            sink.check(Check::error("growth-bound", &e));
        }
    }
    Ok(())
}

fn classify_check(r: Resolved, sink: &mut Sink) {
    let q = r.q.expect("validated");
    match RegimeInput::new(r.n, r.s, q).and_then(|i| classify(&i)) {
        Ok(rep) => {
            sink.check(Check::verdict("classification", true, rep.regime.as_str()));
            sink.report.summary = serde_json::to_value(&rep).unwrap_or_default();
        }
        Err(e) => sink.check(Check::error("classification", e)),
    }
}

fn iterate(cfg: &RunConfig, r: Resolved, sink: &mut Sink) -> Result<(), RunError> {
    let q = r.q.expect("validated");
    let it = &cfg.iterate;
    let trace = RegimeInput::new(r.n, r.s, q)
        .and_then(|i| iterate_exponents(&i, it.c0, it.cbar, it.max_steps));
    let t = match trace {
        Ok(t) => t,
        Err(e) => {
            sink.check(Check::error("closed-form", &e));
            sink.check(Check::error("limit", &e));
            sink.report.plot.trace = Some(Vec::new());
            return Ok(());
        }
    };
    sink.check(Check::verdict(
        "closed-form",
        t.max_closed_form_error <= 1e-12,
        format!(
            "max |gamma_m - closed form| = {:.3e} (<= 1e-12)",
            t.max_closed_form_error
        ),
    ));
    let limit = if t.gamma_inf < 0.0 {
        let agree = t.first_negative_iterated == t.first_negative_closed_form;
        Check::new(
            "limit",
            if agree || t.tie_zone {
                Status::Pass
            } else {
                Status::Fail
            },
            format!(
                "first negative index: iterated {:?}, closed form {:?}{}",
                t.first_negative_iterated,
                t.first_negative_closed_form,
                if t.tie_zone { " (tie zone)" } else { "" }
            ),
        )
    } else {
        // ln C_m - ln L = (ln C_0 - ln L) q^{-m}: contraction at the predicted rate
        let m = t.constants.len() - 1;
        let gap = (t.constants[m].ln() - t.ln_constant_limit).abs();
        let allowed = (t.c0.ln() - t.ln_constant_limit).abs() * q.powi(-(m as i32)) + 1e-10;
        Check::verdict(
            "limit",
            gap <= allowed,
            format!(
                "C_m -> {:.12e}, |ln C_{m} - ln limit| = {gap:.3e} (<= {allowed:.3e})",
                t.constant_limit
            ),
        )
    };
    sink.check(limit);
    sink.report.plot.trace = Some(
        (1..t.gammas.len())
            .map(|m| TraceRow {
                m,
                gamma: t.gammas[m],
                c: t.constants[m],
            })
            .collect(),
    );
    sink.report.summary = serde_json::to_value(&t).unwrap_or_default();
    Ok(())
}

#[derive(Serialize)]
struct CriticalRow {
    #[serde(rename = "R")]
    r: f64,
    j1: f64,
    j1_bound: f64,
    far_lq: f64,
    cutoff_lp: f64,
    j2_bound: f64,
}

fn critical_split(
    cfg: &RunConfig,
    r: Resolved,
    k: &Kernel,
    sink: &mut Sink,
) -> Result<(), RunError> {
    let q = r.q.expect("validated");
    let spec = cfg.critical.field.as_ref().expect("validated");
    let u = spec
        .build(r.n, r.s)
        .map_err(|e| ConfigError::new("critical.field", e.to_string()))?;
    let names = ["j1-bound", "j1-scaling", "lp-uniformity"];
    let scan = match critical_scan(&u, k, q, cfg.critical.rho, &cfg.quadrature) {
        Ok(s) => s,
        Err(e) => {
            for name in names {
                sink.check(Check::error(name, &e));
            }
            return Ok(());
        }
    };
    let rows: Vec<CriticalRow> = scan
        .splits
        .iter()
        .map(|s| CriticalRow {
            r: s.scale,
            j1: s.j1,
            j1_bound: s.j1_bound,
            far_lq: s.far_lq,
            cutoff_lp: s.cutoff_lp,
            j2_bound: s.j2_bound,
        })
        .collect();
    sink.csv(
        "critical.csv",
        &strings(&["R", "J1", "J1_bound", "far_Lq", "cutoff_Lp", "J2_bound"]),
        &rows,
    )?;
    let within = scan.splits.iter().all(|s| s.j1_within_bound);
    sink.check(Check::verdict(
        "j1-bound",
        within,
        "J1 <= C R^{-2s} int_{B_rho} u at every R",
    ));
    let worst = scan
        .j1_ratios
        .iter()
        .map(|v| (v / scan.expected_ratio - 1.0).abs())
        .fold(0.0, f64::max);
    sink.check(Check::verdict(
        "j1-scaling",
        worst <= 0.15,
        format!(
            "J1 ratios {} vs 2^(-2s) = {:.6} (+-15%)",
            scan.j1_ratios
                .iter()
                .map(|v| format!("{v:.4}"))
                .collect::<Vec<_>>()
                .join(", "),
            scan.expected_ratio
        ),
    ));
    sink.check(Check::verdict(
        "lp-uniformity",
        scan.lp_spread <= 1.25,
        format!("max/min = {:.6} (<= 1.25)", scan.lp_spread),
    ));
    sink.report.summary = serde_json::to_value(&scan).unwrap_or_default();
    Ok(())
}

#[derive(Serialize)]
struct SharpRow {
    r: f64,
    operator_value: f64,
    power_value: f64,
    margin: f64,
    error_budget: f64,
    certified: bool,
}

fn sharpness(cfg: &RunConfig, r: Resolved, k: &Kernel, sink: &mut Sink) -> Result<(), RunError> {
    let q = r.q.expect("validated");
    let radii = cfg.sharpness.radii.clone().unwrap_or_else(default_radii);
    let exploratory = k.kind() != KernelKind::Fractional;
    let status = |ok: bool| match (exploratory, ok) {
        (true, _) => Status::Exploratory,
        (false, true) => Status::Pass,
        (false, false) => Status::Fail,
    };
    let outcome = SharpnessProfile::new(r.n, r.s, q, 1.0).and_then(|t| {
        let cal = calibrate_c_with(
            &t,
            k,
            &radii,
            cfg.sharpness.safety,
            &cfg.quadrature,
            exploratory,
        )?;
        let profile = t.with_c(cal.c)?;
        let margins = pointwise_margin_with(&profile, k, &radii, &cfg.quadrature, exploratory)?;
        Ok((cal, margins))
    });
    let (cal, margins) = match outcome {
        Ok(v) => v,
        Err(e) => {
            sink.check(Check::error("calibration", &e));
            sink.check(Check::error("margins", &e));
            return Ok(());
        }
    };
    sink.check(Check::new(
        "calibration",
        status(cal.c > 0.0),
        format!("c = {:.9e}, limiting radius {}", cal.c, cal.limiting_radius),
    ));
    let rows: Vec<SharpRow> = margins
        .rows
        .iter()
        .map(|m| SharpRow {
            r: m.r,
            operator_value: m.operator_value,
            power_value: m.power_value,
            margin: m.margin,
            error_budget: m.error_budget,
            certified: m.certified,
        })
        .collect();
    let header = strings(&["r", "Lu", "u^q", "margin", "error_budget", "certified"]);
    sink.csv("sharpness.csv", &header, &rows)?;
    let certified = margins.certified && margins.skipped.is_empty();
    sink.check(Check::new(
        "margins",
        status(certified),
        format!(
            "{} of {} radii certified, {} skipped",
            margins.rows.iter().filter(|m| m.certified).count(),
            radii.len(),
            margins.skipped.len()
        ),
    ));
    sink.report.plot.margins = Some(
        margins
            .rows
            .iter()
            .map(|m| MarginRow {
                r: m.r,
                margin: m.margin,
                error_budget: m.error_budget,
            })
            .collect(),
    );
    sink.report.summary =
        json!({ "calibration": cal, "skipped": margins.skipped, "exploratory": exploratory });
    Ok(())
}

/// The acceptance checks at their reference parameters.
fn full_suite(sink: &mut Sink) -> Result<(), RunError> {
    let base = QuadratureConfig::default();

    sink.stage("symbol", |sink| {
        let cfg = base.with_tol(1e-8);
        let mut worst = 0.0f64;
        let mut err = None;
        for s in [0.25, 0.5, 0.75] {
            let k = make_fractional_kernel(1, s).expect("valid order");
            for xi in [0.5f64, 1.0, 2.0] {
                match pv_integrate(&cosine(vec![xi]), &k, &[0.0], &cfg) {
                    Ok(r) => worst = worst.max((r.value / xi.powf(2.0 * s) - 1.0).abs()),
                    Err(e) => err = Some(e),
                }
            }
        }
        sink.check(match err {
            Some(e) => Check::error("symbol", e),
            None => Check::verdict(
                "symbol",
                worst <= 1e-3,
                format!("max rel err {worst:.3e} (<= 1e-3)"),
            ),
        });
    });

    sink.stage("bubble", |sink| {
        let cfg = base.with_tol(1e-8).with_r_out(1e7);
        let k = make_fractional_kernel(1, 0.25).expect("valid order");
        let u = bubble(1, 0.25).expect("n > 2s");
        let ratios: nll_core::Result<Vec<f64>> = [0.0, 0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|&x| Ok(pv_integrate(&u, &k, &[x], &cfg)?.value / u.eval(&[x]).powi(3)))
            .collect();
        sink.check(match ratios {
            Ok(v) => {
                let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let rel = (hi - lo) * v.len() as f64 / v.iter().sum::<f64>();
                Check::verdict(
                    "bubble",
                    rel <= 0.01,
                    format!("ratio {:.6}, relative spread {rel:.3e}", v[0]),
                )
            }
            Err(e) => Check::error("bubble", e),
        });
    });

    let mut constants: Vec<Option<(Vec<f64>, Vec<f64>)>> = Vec::new();
    sink.stage("cutoff", |sink| {
        for n in [1, 2] {
            let k = make_fractional_kernel(n, 0.5).expect("valid order");
            let family = CutoffFamily::new(n, 1.0).expect("valid dimension");
            let scales = [1.0, 2.0, 4.0, 8.0, 16.0];
            match verify_cutoff_bound(&k, &family, &scales, &base) {
                Ok(reps) => {
                    let inner: Vec<f64> = reps.iter().map(|r| r.inner_constant).collect();
                    let outer: Vec<f64> = reps.iter().map(|r| r.outer_constant).collect();
                    let failures: usize = reps.iter().map(|r| r.failures.len()).sum();
                    let (si, so) = (spread(&inner), spread(&outer));
                    sink.check(Check::verdict(
                        format!("cutoff-n{n}"),
                        si <= 1.25 && so <= 1.25 && failures == 0,
                        format!("inner x{si:.4}, outer x{so:.4}, {failures} failed samples"),
                    ));
                    constants.push(Some((inner, outer)));
                }
                Err(e) => {
                    sink.check(Check::error(format!("cutoff-n{n}"), e));
                    constants.push(None);
                }
            }
        }
    });

    sink.stage("lambda", |sink| {
        let mut same = true;
        for (n, base_constants) in [1usize, 2].into_iter().zip(&constants) {
            let k = make_fractional_kernel(n, 0.5).expect("valid order");
            let lowered = k.params().lambda / 10.0;
            let k = k.with_lower_bound(lowered).expect("smaller lambda");
            let family = CutoffFamily::new(n, 1.0).expect("valid dimension");
            let again = verify_cutoff_bound(&k, &family, &[1.0, 2.0, 4.0, 8.0, 16.0], &base)
                .ok()
                .map(|reps| {
                    (
                        reps.iter().map(|r| r.inner_constant).collect::<Vec<_>>(),
                        reps.iter().map(|r| r.outer_constant).collect::<Vec<_>>(),
                    )
                });
            same &= base_constants.is_some() && &again == base_constants;
        }
        sink.check(Check::verdict(
            "lambda-independence",
            same,
            "constants with lambda / 10 compared bitwise",
        ));
    });

    sink.stage("dyadic", |sink| {
        let u = power_decay(1, 2.0, 1.0);
        let params = KernelParams::new(1, 0.25, 1.0, 1.0).expect("valid params");
        let radii: Vec<f64> = (0..7).map(|j| 2f64.powi(j)).collect();
        sink.check(
            match verify_dyadic_inequality(&u, 1.5, &params, &radii, 40) {
                Ok(c) => {
                    let v = c.variation.unwrap_or(f64::INFINITY);
                    Check::verdict("dyadic", v <= 10.0, format!("ratio max/min = {v:.4}"))
                }
                Err(e) => Check::error("dyadic", e),
            },
        );
    });

    sink.stage("iteration", |sink| {
        let mut worst = 0.0f64;
        let mut agree = true;
        let mut err = None;
        for n in [1usize, 2, 3] {
            for s in [0.25, 0.5, 0.75] {
                let nf = n as f64;
                let qs = (nf > 2.0 * s).then(|| nf / (nf - 2.0 * s));
                let qlist = match qs {
                    Some(qs) => vec![1.0 + 0.25 * (qs - 1.0), 1.0 + 0.5 * (qs - 1.0), qs],
                    None => vec![1.5, 2.0, 4.0],
                };
                for q in qlist {
                    let cbars: &[f64] = if Some(q) == qs {
                        &[0.5, 1.0, 10.0]
                    } else {
                        &[1.0]
                    };
                    for &cbar in cbars {
                        match RegimeInput::new(n, s, q)
                            .and_then(|i| iterate_exponents(&i, 1.0, cbar, 200))
                        {
                            Ok(t) => {
                                worst = worst.max(t.max_closed_form_error);
                                if qs.is_some_and(|qs| q < qs) {
                                    agree &=
                                        t.first_negative_iterated == t.first_negative_closed_form;
                                }
                                if Some(q) == qs {
                                    let c = t.constants[200];
                                    agree &= (c / t.constant_limit - 1.0).abs() <= 1e-10;
                                }
                                agree &= t.gamma_inf == fixed_point(t.a, q);
                            }
                            Err(e) => err = Some(e),
                        }
                    }
                }
            }
        }
        sink.check(match err {
            Some(e) => Check::error("iteration", e),
            None => Check::verdict(
                "iteration",
                worst <= 1e-12 && agree,
                format!("max closed-form error {worst:.3e}, indices and limits agree: {agree}"),
            ),
        });
    });

    sink.stage("classification", |sink| {
        let table = [
            ((3, 0.5, 1.2), Regime::SubcriticalTrivial),
            ((3, 0.5, 1.5), Regime::CriticalTrivial),
            ((3, 0.5, 2.0), Regime::SupercriticalSharpness),
            ((1, 0.75, 100.0), Regime::LowDimensionTrivial),
        ];
        let ok = table.iter().all(|&((n, s, q), want)| {
            RegimeInput::new(n, s, q)
                .and_then(|i| classify(&i))
                .is_ok_and(|r| r.regime == want && (q != 1.5 || r.q_s == Some(1.5)))
        });
        sink.check(Check::verdict("classification", ok, "four reference cases"));
    });

    sink.stage("critical", |sink| {
        let k = make_fractional_kernel(1, 0.25).expect("valid order");
        let cfg = base.with_r_out(1e6);
        let lps: nll_core::Result<Vec<f64>> = [1.0, 2.0, 4.0]
            .iter()
            .map(|&r| Ok(cutoff_lp_integral(&k, &CutoffFamily::new(1, r)?, 2.0, &cfg)?.integral))
            .collect();
        let scan = critical_scan(&power_decay(1, 1.0, 1.0), &k, 2.0, 1.0, &cfg);
        sink.check(match (lps, scan) {
            (Ok(lps), Ok(scan)) => {
                let worst = scan
                    .j1_ratios
                    .iter()
                    .map(|v| (v / scan.expected_ratio - 1.0).abs())
                    .fold(0.0, f64::max);
                let sp = spread(&lps);
                Check::verdict(
                    "critical",
                    sp <= 1.25 && worst <= 0.15,
                    format!(
                        "Lp max/min {sp:.4}, worst J1 ratio deviation {:.2}%",
                        100.0 * worst
                    ),
                )
            }
            (Err(e), _) | (_, Err(e)) => Check::error("critical", e),
        });
    });

    sink.stage("sharpness", |sink| {
        let k = make_fractional_kernel(1, 0.25).expect("valid order");
        let cfg = base.with_r_out(1e9);
        let radii = default_radii();
        let res = SharpnessProfile::new(1, 0.25, 4.0, 1.0).and_then(|t| {
            let cal = calibrate_c(&t, &k, &radii, 0.5, &cfg)?;
            let m = pointwise_margin(&t.with_c(cal.c)?, &k, &radii, &cfg)?;
            Ok((cal, m))
        });
        sink.check(match res {
            Ok((cal, m)) => Check::verdict(
                "sharpness",
                cal.c > 0.0 && m.certified && m.skipped.is_empty() && m.rows.len() == 25,
                format!(
                    "c = {:.6}, {} margins certified",
                    cal.c,
                    m.rows.iter().filter(|r| r.certified).count()
                ),
            ),
            Err(e) => Check::error("sharpness", e),
        });
    });

    sink.stage("self-adjointness", |sink| {
        let k = make_fractional_kernel(1, 0.5).expect("valid order");
        let cfg = base.with_tol(1e-9);
        sink.check(
            match pairing_rows(&k, &default_pairs(1), 1, 0.5, &cfg, 10.0) {
                Ok(rows) => {
                    let worst = rows.iter().map(|r| r.gap / r.bound).fold(0.0, f64::max);
                    Check::verdict(
                        "self-adjointness",
                        worst <= 1.0,
                        format!("max gap / bound = {worst:.3e}"),
                    )
                }
                Err(e) => Check::error("self-adjointness", e),
            },
        );
    });
    Ok(())
}
