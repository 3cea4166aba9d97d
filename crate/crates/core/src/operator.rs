//! Operator application, the cutoff family `phi_R = eta(x/R)^2`, the empirical check
//! of the cutoff estimate, the bilinear pairing and the weak supersolution residual.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balls::{self, dyadic_points, Polar, PolarSettings};
use crate::error::{Error, Result};
use crate::field::{ScalarField, Smoothness};
use crate::geometry::{
    ball_volume, check_dimension, geomspace, norm, sample_directions, sphere_area,
};
use crate::kernels::Kernel;
use crate::quadrature::{pv_integrate, QuadResult, QuadratureConfig};

/// Number of dyadic annuli beyond `2R` integrated before the analytic tail takes over.
pub const EXTERIOR_ANNULI: i32 = 40;
/// Radii sampled per region by [`verify_cutoff_bound`].
pub const CUTOFF_RADII: usize = 64;

/// `1` for `t <= 0`, `0` for `t >= 1`, C-infinity and decreasing in between.
fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t >= 1.0 {
        return 0.0;
    }
    let a = (-1.0 / (1.0 - t)).exp();
    let b = (-1.0 / t).exp();
    a / (a + b)
}

/// Radial bump: 1 on `B_1`, 0 outside `B_2`.
pub fn make_bump(n: usize) -> Result<ScalarField> {
    check_dimension(n)?;
    Ok(ScalarField::new(n, format!("bump(n={n})"), |x: &[f64]| {
        smooth_step(norm(x) - 1.0)
    })
    .with_support(vec![0.0; n], 2.0)
    .with_decay(0.0, 1.0)
    .radial())
}

#[derive(Debug, Clone)]
pub struct CutoffFamily {
    bump: ScalarField,
    scale: f64,
}

impl CutoffFamily {
    pub fn new(n: usize, scale: f64) -> Result<Self> {
        Self::with_bump(make_bump(n)?, scale)
    }

    /// `bump` must equal 1 on `B_1`, vanish outside `B_2` and take values in `[0, 1]`.
    pub fn with_bump(bump: ScalarField, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::ParameterDomain(format!(
                "cutoff scale {scale} must be positive"
            )));
        }
        match bump.support_radius() {
            Some(r) if r <= 2.0 => {}
            _ => {
                return Err(Error::Precondition(format!(
                    "bump '{}' must declare support inside B_2",
                    bump.label()
                )))
            }
        }
        Ok(Self { bump, scale })
    }

    pub fn at_scale(&self, scale: f64) -> Result<Self> {
        Self::with_bump(self.bump.clone(), scale)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn dimension(&self) -> usize {
        self.bump.dimension()
    }

    pub fn bump(&self) -> &ScalarField {
        &self.bump
    }

    /// `eta(x / R)`.
    pub fn eta(&self) -> ScalarField {
        self.bump.dilated(self.scale)
    }

    /// `phi_R = eta(x / R)^2`.
    pub fn phi(&self) -> ScalarField {
        self.eta().squared()
    }

    /// `(4R, A)` with `|L phi_R(x)| <= A |x|^{-n-2s}` for `|x| >= 4R`.
    pub(crate) fn far_bound(&self, k: &Kernel) -> (f64, f64) {
        let p = k.params();
        let r = self.scale;
        (
            4.0 * r,
            p.big_lambda * ball_volume(p.n, 2.0 * r) * 2f64.powf(p.decay()),
        )
    }
}

fn evaluate_points(
    k: &Kernel,
    f: &ScalarField,
    points: &[Vec<f64>],
    cfg: &QuadratureConfig,
) -> Vec<Result<QuadResult>> {
    points
        .par_iter()
        .map(|x| pv_integrate(f, k, x, cfg))
        .collect()
}

pub fn apply_operator(
    k: &Kernel,
    f: &ScalarField,
    points: &[Vec<f64>],
    cfg: &QuadratureConfig,
) -> Result<Vec<QuadResult>> {
    evaluate_points(k, f, points, cfg).into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    Inner,
    Outer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffSample {
    pub point: Vec<f64>,
    pub region: Region,
    pub value: f64,
    pub error_estimate: f64,
    /// `|L phi_R| R^{2s}` (inner) or `|L phi_R| |x|^{n+2s} / R^n` (outer).
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub point: Vec<f64>,
    pub message: String,
}

/// Empirical sups over the sample grid; they bound the true constants from below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffBoundReport {
    pub scale: f64,
    pub inner_constant: f64,
    pub outer_constant: f64,
    /// Outer constant restricted to `2R <= |x| <= 4R`.
    pub crossover_constant: f64,
    pub inner_radii: Vec<f64>,
    pub outer_radii: Vec<f64>,
    pub directions: usize,
    pub samples: Vec<CutoffSample>,
    pub failures: Vec<SampleFailure>,
}

/// max / min of positive values; infinite when any value is non-positive.
pub fn spread(values: &[f64]) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

fn directions_for(n: usize) -> usize {
    match n {
        1 => 1,
        2 => 32,
        _ => 96,
    }
}

pub fn verify_cutoff_bound(
    k: &Kernel,
    family: &CutoffFamily,
    scales: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Vec<CutoffBoundReport>> {
    let n = k.dimension();
    if family.dimension() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: family.dimension(),
        });
    }
    if let Some(r) = scales.iter().find(|r| !(**r >= 1.0)) {
        return Err(Error::ParameterDomain(format!(
            "cutoff scales must be >= 1, got {r}"
        )));
    }
    cfg.validate()?;
    scales
        .iter()
        .map(|&r| cutoff_report(k, &family.at_scale(r)?, cfg))
        .collect()
}

fn cutoff_report(
    k: &Kernel,
    family: &CutoffFamily,
    cfg: &QuadratureConfig,
) -> Result<CutoffBoundReport> {
    let n = k.dimension();
    let r = family.scale();
    let two_s = 2.0 * k.params().s;
    let dirs = sample_directions(n, directions_for(n));
    let mut inner_radii = vec![0.0];
    inner_radii.extend(
        geomspace(r / 64.0, 2.0 * r, CUTOFF_RADII)
            .into_iter()
            .take(CUTOFF_RADII - 1),
    );
    let outer_radii = geomspace(2.0 * r, 64.0 * r, CUTOFF_RADII);

    let mut points = Vec::new();
    for (region, radii) in [(Region::Inner, &inner_radii), (Region::Outer, &outer_radii)] {
        for &rho in radii {
            if rho == 0.0 {
                points.push((region, vec![0.0; n]));
                continue;
            }
            for d in &dirs {
                points.push((region, d[..n].iter().map(|v| rho * v).collect::<Vec<_>>()));
            }
        }
    }
    let phi = family.phi();
    let xs: Vec<Vec<f64>> = points.iter().map(|(_, x)| x.clone()).collect();
    let results = evaluate_points(k, &phi, &xs, cfg);

    let mut report = CutoffBoundReport {
        scale: r,
        inner_constant: 0.0,
        outer_constant: 0.0,
        crossover_constant: 0.0,
        inner_radii,
        outer_radii,
        directions: dirs.len(),
        samples: Vec::with_capacity(points.len()),
        failures: Vec::new(),
    };
    for ((region, x), res) in points.into_iter().zip(results) {
        match res {
            Ok(q) => {
                let rho = norm(&x);
                let normalized = match region {
                    Region::Inner => q.value.abs() * r.powf(two_s),
                    Region::Outer => q.value.abs() * rho.powf(n as f64 + two_s) / r.powi(n as i32),
                };
                match region {
                    Region::Inner => report.inner_constant = report.inner_constant.max(normalized),
                    Region::Outer => {
                        report.outer_constant = report.outer_constant.max(normalized);
                        if rho <= 4.0 * r {
                            report.crossover_constant = report.crossover_constant.max(normalized);
                        }
                    }
                }
                report.samples.push(CutoffSample {
                    point: x,
                    region,
                    value: q.value,
                    error_estimate: q.error_estimate,
                    normalized,
                });
            }
            Err(e) => report.failures.push(SampleFailure {
                point: x,
                message: e.to_string(),
            }),
        }
    }
    Ok(report)
}

fn compact_support_radius(f: &ScalarField, what: &str) -> Result<f64> {
    f.support_radius().ok_or_else(|| {
        Error::Precondition(format!(
            "{what} '{}' must declare compact support",
            f.label()
        ))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pairing {
    pub value: f64,
    /// Outer quadrature error plus the integrated operator error.
    pub error_estimate: f64,
    pub evaluations: usize,
}

/// `int f L_K g dx`, integrated over the support ball of `f`.
pub fn pairing(
    k: &Kernel,
    f: &ScalarField,
    g: &ScalarField,
    cfg: &QuadratureConfig,
    domain_radius: f64,
) -> Result<Pairing> {
    let n = k.dimension();
    for (field, what) in [(f, "f"), (g, "g")] {
        if field.dimension() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: field.dimension(),
            });
        }
        let r = compact_support_radius(field, what)?;
        if r > domain_radius {
            return Err(Error::Precondition(format!(
                "support of {what} reaches radius {r}, beyond the domain radius {domain_radius}"
            )));
        }
    }
    cfg.validate()?;
    let ball = f.support().expect("checked above");
    let rule = balls::rule_for(n, false, cfg.angular)?;
    let pts: Vec<f64> = (0..=8).map(|i| ball.radius * i as f64 / 8.0).collect();
    let inner = nested_config(cfg);
    let out = balls::integrate(&ball.center, &pts, &rule, outer_settings(cfg), |x| {
        let fx = f.try_eval(x)?;
        if fx == 0.0 {
            return Ok((0.0, 0.0));
        }
        let lg = pv_integrate(g, k, x, &inner)?;
        Ok((fx * lg.value, fx.abs() * lg.error_estimate))
    })?;
    Ok(Pairing {
        value: out.value,
        error_estimate: out.error + out.aux,
        evaluations: out.evaluations,
    })
}

/// Operator evaluations nested inside an outer integral run this much tighter than the
/// outer tolerance, so their jitter stays below what the outer refinement resolves.
const NESTED_TOL_FACTOR: f64 = 1e-3;

pub(crate) fn nested_config(cfg: &QuadratureConfig) -> QuadratureConfig {
    cfg.with_tol((cfg.tol * NESTED_TOL_FACTOR).max(1e-13))
}

pub(crate) fn outer_settings(cfg: &QuadratureConfig) -> PolarSettings {
    PolarSettings {
        tol: cfg.tol,
        abs_tol: 0.0,
        depth: cfg.depth,
    }
}

/// Integrates `combine(x, L phi_R(x))` over `B_outer`, breaking at the cutoff's scales.
pub(crate) fn cutoff_integral<W>(
    k: &Kernel,
    family: &CutoffFamily,
    cfg: &QuadratureConfig,
    radial: bool,
    outer: f64,
    combine: W,
) -> Result<Polar>
where
    W: Fn(&[f64], &QuadResult) -> Result<(f64, f64)> + Sync,
{
    let n = k.dimension();
    let r = family.scale();
    let phi = family.phi();
    let rule = balls::rule_for(n, radial && k.is_isotropic(), cfg.angular)?;
    let pts = dyadic_points(0.0, outer, &[r, 2.0 * r, 4.0 * r]);
    let inner = nested_config(cfg);
    balls::integrate(&vec![0.0; n], &pts, &rule, outer_settings(cfg), |x| {
        let l = pv_integrate(&phi, k, x, &inner)?;
        combine(x, &l)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakResidual {
    /// `int u L phi_R - int u^q phi_R`.
    pub residual: f64,
    pub operator_term: f64,
    pub source_term: f64,
    /// Quadrature errors, propagated operator errors and the exterior tail bound.
    pub error_budget: f64,
    pub tail_bound: f64,
    pub evaluations: usize,
}

/// Radius beyond which a decaying `u` is handled by the analytic tail, and that tail:
/// a bound on `int_{|x| > T} |u| A |x|^{-n-2s} dx`.
fn exterior_tail(u: &ScalarField, k: &Kernel, family: &CutoffFamily) -> Result<(f64, f64)> {
    let p = k.params();
    let r = family.scale();
    if let Some(rho) = u.support_radius() {
        return Ok((rho.max(2.0 * r), 0.0));
    }
    let decay = u.decay().ok_or_else(|| {
        Error::Precondition(format!(
            "field '{}' declares neither decay nor compact support",
            u.label()
        ))
    })?;
    let rate = decay.beta + 2.0 * p.s;
    if rate <= 0.0 {
        return Err(Error::TailSpace(format!(
            "decay exponent {} is too slow for s = {}: u is not in the tail space",
            decay.beta, p.s
        )));
    }
    let t = 2f64.powi(EXTERIOR_ANNULI + 1) * r;
    let (_, a) = family.far_bound(k);
    // (1 + |x|)^{-beta} <= 2^{max(0, -beta)} |x|^{-beta} for |x| >= 1
    let bound =
        decay.constant * 2f64.powf((-decay.beta).max(0.0)) * a * sphere_area(p.n) * t.powf(-rate)
            / rate;
    Ok((t, bound))
}

pub fn weak_supersolution_residual(
    k: &Kernel,
    u: &ScalarField,
    q: f64,
    family: &CutoffFamily,
    cfg: &QuadratureConfig,
) -> Result<WeakResidual> {
    let n = k.dimension();
    if u.dimension() != n || family.dimension() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: u.dimension(),
        });
    }
    if !(q > 1.0) {
        return Err(Error::ParameterDomain(format!("q = {q} must exceed 1")));
    }
    cfg.validate()?;
    let (outer, tail_bound) = exterior_tail(u, k, family)?;
    let sample = |x: &[f64]| -> Result<f64> {
        let v = u.try_eval(x)?;
        if v < 0.0 {
            return Err(Error::NegativeSample {
                value: v,
                point: x.to_vec(),
            });
        }
        Ok(v)
    };
    let r = family.scale();
    let phi = family.phi();
    // one integrand for both terms keeps the target relative to the residual itself
    let combined = cutoff_integral(k, family, cfg, u.is_radial(), outer, |x, l| {
        let v = sample(x)?;
        Ok((v * l.value - v.powf(q) * phi.eval(x), v * l.error_estimate))
    })?;
    let rule = balls::rule_for(n, u.is_radial(), cfg.angular)?;
    let source = balls::integrate(
        &vec![0.0; n],
        &dyadic_points(0.0, 2.0 * r, &[r]),
        &rule,
        outer_settings(cfg),
        |x| Ok((sample(x)?.powf(q) * phi.eval(x), 0.0)),
    )?;
    Ok(WeakResidual {
        residual: combined.value,
        operator_term: combined.value + source.value,
        source_term: source.value,
        error_budget: combined.error + combined.aux + tail_bound,
        tail_bound,
        evaluations: combined.evaluations + source.evaluations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffNorm {
    pub p: f64,
    /// `int |L phi_R|^p dx`.
    pub integral: f64,
    pub error_estimate: f64,
    pub tail_bound: f64,
}

/// `int_{R^n} |L_K phi_R|^p dx`, finite for `p (n + 2s) > n`.
pub fn cutoff_lp_integral(
    k: &Kernel,
    family: &CutoffFamily,
    p: f64,
    cfg: &QuadratureConfig,
) -> Result<CutoffNorm> {
    let params = k.params();
    let n = params.n as f64;
    let excess = p * params.decay() - n;
    if !(p >= 1.0 && excess > 0.0) {
        return Err(Error::ParameterDomain(format!(
            "need p >= 1 and p(n+2s) > n, got p = {p}"
        )));
    }
    cfg.validate()?;
    let t = 2f64.powi(EXTERIOR_ANNULI + 1) * family.scale();
    let (_, a) = family.far_bound(k);
    let tail_bound = a.powf(p) * sphere_area(params.n) * t.powf(-excess) / excess;
    let out = cutoff_integral(k, family, cfg, true, t, |_, l| {
        let m = l.value.abs();
        Ok((m.powf(p), p * m.powf(p - 1.0) * l.error_estimate))
    })?;
    Ok(CutoffNorm {
        p,
        integral: out.value,
        error_estimate: out.error + out.aux + tail_bound,
        tail_bound,
    })
}

/// `sup |L phi_R(x)| R^{2s}` over the inner sample grid of [`verify_cutoff_bound`].
pub(crate) fn inner_constant(
    k: &Kernel,
    family: &CutoffFamily,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let n = k.dimension();
    let r = family.scale();
    let dirs = sample_directions(n, directions_for(n));
    let mut points = vec![vec![0.0; n]];
    for rho in geomspace(r / 64.0, 2.0 * r, CUTOFF_RADII)
        .into_iter()
        .take(CUTOFF_RADII - 1)
    {
        for d in &dirs {
            points.push(d[..n].iter().map(|v| rho * v).collect());
        }
    }
    let vals = apply_operator(k, &family.phi(), &points, cfg)?;
    Ok(vals.iter().map(|q| q.value.abs()).fold(0.0, f64::max) * r.powf(2.0 * k.params().s))
}

/// Smoothness flag for reports: operator values of rough fields are best effort.
pub fn is_best_effort(u: &ScalarField) -> bool {
    u.smoothness() == Smoothness::Rough
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::constant;
    use crate::kernels::make_fractional_kernel;
    use approx::assert_relative_eq;

    #[test]
    fn bump_shape() {
        let b = make_bump(1).unwrap();
        assert_eq!(b.eval(&[0.5]), 1.0);
        assert_eq!(b.eval(&[3.0]), 0.0);
        let mid = b.eval(&[1.5]);
        assert!(mid > 0.0 && mid < 1.0);
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = b.eval(&[1.0 + i as f64 / 100.0]);
            assert!(v <= prev);
            prev = v;
        }
        let b2 = make_bump(2).unwrap();
        assert_eq!(b2.eval(&[1.2, 0.5]), b2.eval(&[0.5, 1.2]));
        assert!(make_bump(4).is_err());
    }

    #[test]
    fn cutoff_plateau_and_support() {
        for r in [1.0, 3.0, 16.0] {
            let phi = CutoffFamily::new(2, r).unwrap().phi();
            assert_eq!(phi.eval(&[r, 0.0]), 1.0);
            assert_eq!(phi.eval(&[0.0, 2.0 * r]), 0.0);
            let v = phi.eval(&[1.3 * r, 0.2 * r]);
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn far_point_matches_direct_integral() {
        // for |x| >= 2R the operator is minus the non-singular integral of phi K(. - x)
        let k = make_fractional_kernel(1, 0.5).unwrap();
        let fam = CutoffFamily::new(1, 1.0).unwrap();
        let phi = fam.phi();
        let x = 2.5;
        let got =
            apply_operator(&k, &phi, &[vec![x]], &QuadratureConfig::default()).unwrap()[0].value;
        // midpoint sum over the support
        let m = 400_000;
        let h = 4.0 / m as f64;
        let direct: f64 = (0..m)
            .map(|i| {
                let y = -2.0 + (i as f64 + 0.5) * h;
                phi.eval(&[y]) * k.eval(&[y - x]) * h
            })
            .sum();
        assert_relative_eq!(got, -direct, max_relative = 1e-6);
    }

    #[test]
    fn constant_field_image_vanishes() {
        let k = make_fractional_kernel(1, 0.5).unwrap();
        let pts = vec![vec![0.0], vec![1.0], vec![5.0]];
        let cfg = QuadratureConfig::default().with_r_out(1e8);
        for q in apply_operator(&k, &constant(1, 1.0), &pts, &cfg).unwrap() {
            assert!(q.value.abs() < 1e-7);
        }
    }

    #[test]
    fn pairing_of_zero_is_zero() {
        let k = make_fractional_kernel(1, 0.5).unwrap();
        let f = make_bump(1).unwrap();
        let zero = ScalarField::new(1, "zero", |_| 0.0).with_support(vec![0.0], 1.0);
        let p = pairing(&k, &f, &zero, &QuadratureConfig::default(), 10.0).unwrap();
        assert_eq!(p.value, 0.0);
    }

    #[test]
    fn pairing_requires_compact_support() {
        let k = make_fractional_kernel(1, 0.5).unwrap();
        let f = make_bump(1).unwrap();
        let err = pairing(
            &k,
            &f,
            &constant(1, 1.0),
            &QuadratureConfig::default(),
            10.0,
        );
        assert!(matches!(err, Err(Error::Precondition(_))));
        let far = f.shifted(&[20.0]);
        assert!(pairing(&k, &f, &far, &QuadratureConfig::default(), 10.0).is_err());
    }

    #[test]
    fn residual_of_zero_and_one() {
        let k = make_fractional_kernel(1, 0.5).unwrap();
        let fam = CutoffFamily::new(1, 1.0).unwrap();
        let cfg = QuadratureConfig::default();
        let zero = weak_supersolution_residual(&k, &constant(1, 0.0), 2.0, &fam, &cfg).unwrap();
        assert_eq!(zero.residual, 0.0);

        let one = weak_supersolution_residual(&k, &constant(1, 1.0), 2.0, &fam, &cfg).unwrap();
        let phi = fam.phi();
        let m = 200_000;
        let h = 4.0 / m as f64;
        let mass: f64 = (0..m)
            .map(|i| phi.eval(&[-2.0 + (i as f64 + 0.5) * h]) * h)
            .sum();
        assert!(one.residual < 0.0);
        assert!((one.residual + mass).abs() <= one.error_budget + 1e-6);
    }

    #[test]
    fn residual_rejects_negative_and_divergent_fields() {
        let k = make_fractional_kernel(1, 0.25).unwrap();
        let fam = CutoffFamily::new(1, 1.0).unwrap();
        let cfg = QuadratureConfig::default();
        let neg = constant(1, -1.0);
        assert!(matches!(
            weak_supersolution_residual(&k, &neg, 2.0, &fam, &cfg),
            Err(Error::NegativeSample { .. })
        ));
        let growing = crate::field::power_decay(1, -1.0, 1.0);
        assert!(matches!(
            weak_supersolution_residual(&k, &growing, 2.0, &fam, &cfg),
            Err(Error::TailSpace(_))
        ));
    }

    #[test]
    fn spread_of_values() {
        assert_eq!(spread(&[1.0, 2.0, 1.5]), 2.0);
        assert!(spread(&[0.0, 1.0]).is_infinite());
    }
}
