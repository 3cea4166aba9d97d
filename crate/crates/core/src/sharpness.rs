//! Supercritical profiles `u = c (1 + |x|)^{-alpha}`, `alpha = 2s / (q - 1)`, and their
//! sampled supersolution margins `L_K u - u^q`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{power_decay, ScalarField};
use crate::geometry::geomspace;
use crate::iteration::RegimeInput;
use crate::kernels::{Kernel, KernelKind};
use crate::operator::{weak_supersolution_residual, CutoffFamily, WeakResidual};
use crate::quadrature::{pv_integrate, QuadratureConfig};

#[derive(Debug, Clone)]
pub struct SharpnessProfile {
    n: usize,
    s: f64,
    q: f64,
    c: f64,
    alpha: f64,
    field: ScalarField,
}

impl SharpnessProfile {
    pub fn new(n: usize, s: f64, q: f64, c: f64) -> Result<Self> {
        let input = RegimeInput::new(n, s, q)?;
        match input.serrin_exponent() {
            Some(qs) if q > qs => {}
            Some(qs) => {
                return Err(Error::Regime(format!(
                    "q = {q} <= q_S = {qs}: no positive supersolution exists"
                )))
            }
            None => {
                return Err(Error::Regime(format!(
                    "n = {n} <= 2s = {}: no supercritical regime",
                    2.0 * s
                )))
            }
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::ParameterDomain(format!("c = {c} must be positive")));
        }
        let alpha = 2.0 * s / (q - 1.0);
        Ok(Self {
            n,
            s,
            q,
            c,
            alpha,
            field: power_decay(n, alpha, c),
        })
    }

    pub fn with_c(&self, c: f64) -> Result<Self> {
        Self::new(self.n, self.s, self.q, c)
    }

    /// The same profile with `c = 1`.
    pub fn base(&self) -> Self {
        self.with_c(1.0).expect("validated parameters")
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> f64 {
        self.s
    }
}

/// `{0}` and 24 log-spaced radii in `[0.1, 100]`.
pub fn default_radii() -> Vec<f64> {
    let mut r = vec![0.0];
    r.extend(geomspace(0.1, 100.0, 24));
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub r: f64,
    pub operator_value: f64,
    pub power_value: f64,
    pub margin: f64,
    pub error_budget: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub c: f64,
    pub rows: Vec<MarginRow>,
    /// Radii whose quadrature failed, with the reason; these are skipped.
    pub skipped: Vec<(f64, String)>,
    pub certified: bool,
    /// Set for kernels other than the fractional one.
    pub exploratory: bool,
}

fn check_kernel(profile: &SharpnessProfile, k: &Kernel, allow_other_kernels: bool) -> Result<bool> {
    if k.dimension() != profile.n || (k.params().s - profile.s).abs() > 0.0 {
        return Err(Error::Precondition(format!(
            "kernel (n = {}, s = {}) does not match the profile (n = {}, s = {})",
            k.dimension(),
            k.params().s,
            profile.n,
            profile.s
        )));
    }
    let fractional = k.kind() == KernelKind::Fractional;
    if !fractional && !allow_other_kernels {
        return Err(Error::Precondition(
            "sharpness profiles are certified for the fractional kernel only".into(),
        ));
    }
    Ok(!fractional)
}

fn sample_point(n: usize, r: f64) -> Vec<f64> {
    let mut x = vec![0.0; n];
    x[0] = r;
    x
}

pub fn pointwise_margin(
    profile: &SharpnessProfile,
    k: &Kernel,
    radii: &[f64],
    cfg: &QuadratureConfig,
) -> Result<MarginReport> {
    pointwise_margin_with(profile, k, radii, cfg, false)
}

pub fn pointwise_margin_with(
    profile: &SharpnessProfile,
    k: &Kernel,
    radii: &[f64],
    cfg: &QuadratureConfig,
    allow_other_kernels: bool,
) -> Result<MarginReport> {
    let exploratory = check_kernel(profile, k, allow_other_kernels)?;
    if let Some(r) = radii.iter().find(|r| !(**r >= 0.0)) {
        return Err(Error::ParameterDomain(format!("radius {r} must be >= 0")));
    }
    let u = profile.field();
    let results: Vec<_> = radii
        .par_iter()
        .map(|&r| pv_integrate(u, k, &sample_point(profile.n, r), cfg))
        .collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (&r, res) in radii.iter().zip(results) {
        match res {
            Ok(lu) => {
                let power_value = u.eval(&sample_point(profile.n, r)).powf(profile.q);
                let margin = lu.value - power_value;
                rows.push(MarginRow {
                    r,
                    operator_value: lu.value,
                    power_value,
                    margin,
                    error_budget: lu.error_estimate,
                    certified: margin >= -lu.error_estimate,
                });
            }
            Err(e) => skipped.push((r, e.to_string())),
        }
    }
    Ok(MarginReport {
        c: profile.c,
        certified: rows.iter().all(|r| r.certified),
        rows,
        skipped,
        exploratory,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub c: f64,
    pub safety: f64,
    /// Radius attaining the minimum of `L u0 / u0^q`.
    pub limiting_radius: f64,
    /// `(r, L u0(x_r), u0(x_r)^q)` for the base profile `u0 = (1 + |x|)^{-alpha}`.
    pub base: Vec<(f64, f64, f64)>,
    pub exploratory: bool,
}

/// `c = safety * min_r [L u0(x_r) / u0(x_r)^q]^{1/(q-1)}`.
pub fn calibrate_c(
    template: &SharpnessProfile,
    k: &Kernel,
    radii: &[f64],
    safety: f64,
    cfg: &QuadratureConfig,
) -> Result<Calibration> {
    calibrate_c_with(template, k, radii, safety, cfg, false)
}

pub fn calibrate_c_with(
    template: &SharpnessProfile,
    k: &Kernel,
    radii: &[f64],
    safety: f64,
    cfg: &QuadratureConfig,
    allow_other_kernels: bool,
) -> Result<Calibration> {
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::ParameterDomain(format!(
            "safety {safety} not in (0, 1]"
        )));
    }
    if radii.is_empty() {
        return Err(Error::ParameterDomain(
            "at least one radius is required".into(),
        ));
    }
    let base = template.base();
    let report = pointwise_margin_with(&base, k, radii, cfg, allow_other_kernels)?;
    if let Some((r, msg)) = report.skipped.first() {
        return Err(Error::Precondition(format!(
            "operator evaluation failed at r = {r}: {msg}"
        )));
    }
    let mut best = (f64::INFINITY, f64::NAN);
    for row in &report.rows {
        if row.operator_value <= 0.0 {
            return Err(Error::CalibrationImpossible {
                radius: row.r,
                value: row.operator_value,
            });
        }
        let ratio = row.operator_value / row.power_value;
        if ratio < best.0 {
            best = (ratio, row.r);
        }
    }
    Ok(Calibration {
        c: safety * best.0.powf(1.0 / (template.q - 1.0)),
        safety,
        limiting_radius: best.1,
        base: report
            .rows
            .iter()
            .map(|r| (r.r, r.operator_value, r.power_value))
            .collect(),
        exploratory: report.exploratory,
    })
}

/// Weak-form residuals of the profile against `phi_R` at each scale.
pub fn weak_form_check(
    profile: &SharpnessProfile,
    k: &Kernel,
    scales: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Vec<WeakResidual>> {
    scales
        .iter()
        .map(|&r| {
            let family = CutoffFamily::new(profile.n, r)?;
            weak_supersolution_residual(k, profile.field(), profile.q, &family, cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{make_anisotropic_kernel, make_fractional_kernel, KernelParams};

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default().with_r_out(1e9)
    }

    #[test]
    fn regime_preconditions() {
        assert!(SharpnessProfile::new(1, 0.25, 2.0, 1.0).is_err());
        assert!(SharpnessProfile::new(1, 0.75, 3.0, 1.0).is_err());
        let p = SharpnessProfile::new(1, 0.25, 4.0, 0.3).unwrap();
        assert!((p.alpha() - 1.0 / 6.0).abs() < 1e-15);
        assert!(p.alpha() < 1.0 - 0.5);
    }

    #[test]
    fn single_radius_calibration_algebra() {
        let k = make_fractional_kernel(1, 0.25).unwrap();
        let t = SharpnessProfile::new(1, 0.25, 4.0, 1.0).unwrap();
        let cal = calibrate_c(&t, &k, &[1.0], 0.5, &cfg()).unwrap();
        let (_, l0, p0) = cal.base[0];
        let margin = cal.c * l0 - cal.c.powf(4.0) * p0;
        let expected = (1.0 - 0.5f64.powi(3)) * cal.c * l0;
        assert!((margin - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn safety_is_monotone() {
        let k = make_fractional_kernel(1, 0.25).unwrap();
        let t = SharpnessProfile::new(1, 0.25, 4.0, 1.0).unwrap();
        let radii = [0.0, 1.0, 10.0];
        let lo = calibrate_c(&t, &k, &radii, 0.5, &cfg()).unwrap();
        let hi = calibrate_c(&t, &k, &radii, 0.9, &cfg()).unwrap();
        assert!(lo.c <= hi.c);
    }

    #[test]
    fn other_kernels_need_the_flag() {
        let p = KernelParams::new(1, 0.25, 0.1, 0.3).unwrap();
        let k = make_anisotropic_kernel(p, |_| 0.2).unwrap();
        let t = SharpnessProfile::new(1, 0.25, 4.0, 0.1).unwrap();
        assert!(pointwise_margin(&t, &k, &[1.0], &cfg()).is_err());
        let r = pointwise_margin_with(&t, &k, &[1.0], &cfg(), true).unwrap();
        assert!(r.exploratory);
    }
}
