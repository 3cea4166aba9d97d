//! Even, uniformly elliptic jump kernels `lambda |z|^{-n-2s} <= K(z) <= Lambda |z|^{-n-2s}`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::geometry::{geomspace, norm, sample_directions};

/// Relative slack allowed in kernel validation.
pub const VALIDATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub n: usize,
    pub s: f64,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
}

impl KernelParams {
    pub fn new(n: usize, s: f64, lambda: f64, big_lambda: f64) -> Result<Self> {
        let p = Self {
            n,
            s,
            lambda,
            big_lambda,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::ParameterDomain("dimension n must be >= 1".into()));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::ParameterDomain(format!(
                "order s = {} not in (0, 1)",
                self.s
            )));
        }
        if !(self.lambda > 0.0 && self.lambda <= self.big_lambda && self.big_lambda.is_finite()) {
            return Err(Error::ParameterDomain(format!(
                "need 0 < lambda <= Lambda < inf, got lambda = {}, Lambda = {}",
                self.lambda, self.big_lambda
            )));
        }
        Ok(())
    }

    /// n + 2s
    pub fn decay(&self) -> f64 {
        self.n as f64 + 2.0 * self.s
    }
}

/// Normalization making the Fourier symbol of the operator exactly |xi|^{2s}:
/// `c = s 4^s Gamma(n/2 + s) / (pi^{n/2} Gamma(1 - s))`.
pub fn fractional_constant(n: usize, s: f64) -> f64 {
    let half = n as f64 / 2.0;
    s * 4f64.powf(s) * gamma(half + s) / (PI.powf(half) * gamma(1.0 - s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Fractional,
    Anisotropic,
    CustomTable,
    Custom,
}

type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Form {
    /// K(z) = a(z/|z|) |z|^{-n-2s}
    Homogeneous(PointFn),
    General(PointFn),
}

#[derive(Clone)]
pub struct Kernel {
    params: KernelParams,
    label: String,
    kind: KernelKind,
    form: Form,
    isotropic: bool,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("label", &self.label)
            .field("kind", &self.kind)
            .field("params", &self.params)
            .finish()
    }
}

impl Kernel {
    /// A kernel from an arbitrary callable; no evenness or sandwich checks are made,
    /// use [`validate_kernel`] for that.
    pub fn custom(
        params: KernelParams,
        label: impl Into<String>,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            label: label.into(),
            kind: KernelKind::Custom,
            form: Form::General(Arc::new(f)),
            isotropic: false,
        })
    }

    #[inline]
    pub fn eval(&self, z: &[f64]) -> f64 {
        match &self.form {
            Form::Homogeneous(a) => {
                let r = norm(z);
                let mut dir = [0.0; 3];
                for (d, v) in dir.iter_mut().zip(z) {
                    *d = v / r;
                }
                a(&dir[..z.len()]) * r.powf(-self.params.decay())
            }
            Form::General(k) => k(z),
        }
    }

    /// Angular profile a(theta) for homogeneous kernels.
    pub fn profile(&self, dir: &[f64]) -> Option<f64> {
        match &self.form {
            Form::Homogeneous(a) => Some(a(dir)),
            Form::General(_) => None,
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self.form, Form::Homogeneous(_))
    }

    pub fn is_isotropic(&self) -> bool {
        self.isotropic
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.params.n
    }

    /// Same kernel with a smaller declared lower ellipticity constant.
    pub fn with_lower_bound(mut self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= self.params.lambda) {
            return Err(Error::ParameterDomain(format!(
                "lowered lambda must lie in (0, {}], got {lambda}",
                self.params.lambda
            )));
        }
        self.params.lambda = lambda;
        Ok(self)
    }
}

/// `K(z) = c_{n,s} |z|^{-n-2s}` with `lambda = Lambda = c_{n,s}`.
pub fn make_fractional_kernel(n: usize, s: f64) -> Result<Kernel> {
    let c = fractional_constant(n, s);
    let params = KernelParams::new(n, s, c, c)?;
    Ok(Kernel {
        params,
        label: format!("fractional(n={n}, s={s})"),
        kind: KernelKind::Fractional,
        form: Form::Homogeneous(Arc::new(move |_| c)),
        isotropic: true,
    })
}

fn profile_directions(n: usize) -> Vec<[f64; 3]> {
    match n {
        1 => vec![[1.0, 0.0, 0.0]],
        2 => sample_directions(2, 360),
        _ => sample_directions(3, 2000),
    }
}

/// `K(z) = a(z/|z|) |z|^{-n-2s}`; the profile is checked for evenness and for
/// `lambda <= a <= Lambda` on a sample grid of directions.
pub fn make_anisotropic_kernel(
    params: KernelParams,
    profile: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
) -> Result<Kernel> {
    params.validate()?;
    let n = params.n;
    for d in profile_directions(n) {
        let d = &d[..n];
        let neg: Vec<f64> = d.iter().map(|v| -v).collect();
        let (ap, an) = (profile(d), profile(&neg));
        let fail = |reason: String| Error::KernelValidation {
            reason,
            direction: d.to_vec(),
        };
        if !(ap.is_finite() && ap > 0.0 && an.is_finite() && an > 0.0) {
            return Err(fail(format!(
                "profile not positive and finite ({ap}, {an})"
            )));
        }
        if (ap - an).abs() > VALIDATION_TOL * ap.max(an) {
            return Err(fail(format!(
                "profile not even: a(theta) = {ap}, a(-theta) = {an}"
            )));
        }
        if ap < params.lambda * (1.0 - VALIDATION_TOL) {
            return Err(fail(format!(
                "profile {ap} below lambda = {}",
                params.lambda
            )));
        }
        if ap > params.big_lambda * (1.0 + VALIDATION_TOL) {
            return Err(fail(format!(
                "profile {ap} above Lambda = {}",
                params.big_lambda
            )));
        }
    }
    let constant = {
        let dirs = profile_directions(n);
        let first = profile(&dirs[0][..n]);
        dirs.iter().all(|d| profile(&d[..n]) == first)
    };
    Ok(Kernel {
        params,
        label: format!("anisotropic(n={n}, s={})", params.s),
        kind: KernelKind::Anisotropic,
        form: Form::Homogeneous(Arc::new(profile)),
        isotropic: constant,
    })
}

/// Anisotropic kernel whose profile is the periodic piecewise-linear interpolant of
/// `(angle, value)` pairs, angle in radians measured from the first axis.
/// Supported for n = 1 (angles 0 and pi) and n = 2.
pub fn make_table_kernel(params: KernelParams, table: &[(f64, f64)]) -> Result<Kernel> {
    if params.n > 2 {
        return Err(Error::UnsupportedDimension(params.n));
    }
    if table.is_empty() {
        return Err(Error::ParameterDomain("empty profile table".into()));
    }
    let mut pts: Vec<(f64, f64)> = table.iter().map(|&(a, v)| (a.rem_euclid(TAU), v)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);
    let pts = Arc::new(pts);
    let interp = move |dir: &[f64]| -> f64 {
        let angle = if dir.len() == 1 {
            if dir[0] >= 0.0 {
                0.0
            } else {
                PI
            }
        } else {
            dir[1].atan2(dir[0]).rem_euclid(TAU)
        };
        periodic_interp(&pts, angle)
    };
    let mut k = make_anisotropic_kernel(params, interp)?;
    k.kind = KernelKind::CustomTable;
    k.label = format!("custom-table(n={}, s={})", params.n, params.s);
    Ok(k)
}

fn periodic_interp(pts: &[(f64, f64)], angle: f64) -> f64 {
    let len = pts.len();
    if len == 1 {
        return pts[0].1;
    }
    let (lo, hi) = match pts.partition_point(|p| p.0 <= angle) {
        0 => ((pts[len - 1].0 - TAU, pts[len - 1].1), pts[0]),
        i if i == len => (pts[len - 1], (pts[0].0 + TAU, pts[0].1)),
        i => (pts[i - 1], pts[i]),
    };
    let t = (angle - lo.0) / (hi.0 - lo.0);
    lo.1 + t * (hi.1 - lo.1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub max_evenness_violation: f64,
    pub max_lower_violation: f64,
    pub max_upper_violation: f64,
    pub worst_evenness_point: Vec<f64>,
    pub worst_lower_point: Vec<f64>,
    pub worst_upper_point: Vec<f64>,
    pub nonpositive_samples: usize,
    pub passed: bool,
}

/// Sample-based check of evenness and of both sandwich sides on a log-spaced radial
/// (10^-3 .. 10^3) by angular grid of roughly `sample_count` points.
pub fn validate_kernel(k: &Kernel, sample_count: usize) -> ValidationReport {
    let p = k.params();
    let n = p.n;
    let ndirs = if n == 1 {
        1
    } else {
        ((sample_count as f64).sqrt().ceil() as usize).max(1)
    };
    let nradii = (sample_count / ndirs).max(1);
    let dirs = sample_directions(n, ndirs);
    let radii = geomspace(1e-3, 1e3, nradii);

    let mut rep = ValidationReport {
        samples: 0,
        max_evenness_violation: 0.0,
        max_lower_violation: 0.0,
        max_upper_violation: 0.0,
        worst_evenness_point: vec![],
        worst_lower_point: vec![],
        worst_upper_point: vec![],
        nonpositive_samples: 0,
        passed: false,
    };
    for d in &dirs {
        for &r in &radii {
            let z: Vec<f64> = d[..n].iter().map(|v| v * r).collect();
            let mz: Vec<f64> = z.iter().map(|v| -v).collect();
            let (kp, km) = (k.eval(&z), k.eval(&mz));
            rep.samples += 1;
            if !(kp.is_finite() && kp > 0.0 && km.is_finite() && km > 0.0) {
                rep.nonpositive_samples += 1;
                continue;
            }
            let power = norm(&z).powf(-p.decay());
            let even = (kp - km).abs() / (0.5 * (kp + km));
            if even > rep.max_evenness_violation {
                rep.max_evenness_violation = even;
                rep.worst_evenness_point = z.clone();
            }
            for (val, pt) in [(kp, &z), (km, &mz)] {
                let lower = (p.lambda * power - val).max(0.0) / (p.lambda * power);
                if lower > rep.max_lower_violation {
                    rep.max_lower_violation = lower;
                    rep.worst_lower_point = pt.clone();
                }
                let upper = (val - p.big_lambda * power).max(0.0) / (p.big_lambda * power);
                if upper > rep.max_upper_violation {
                    rep.max_upper_violation = upper;
                    rep.worst_upper_point = pt.clone();
                }
            }
        }
    }
    rep.passed = rep.nonpositive_samples == 0
        && rep.max_evenness_violation <= VALIDATION_TOL
        && rep.max_lower_violation <= VALIDATION_TOL
        && rep.max_upper_violation <= VALIDATION_TOL;
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fractional_constant_half_laplacian_1d() {
        // (-Delta)^{1/2} on the line has kernel 1 / (pi |z|^2)
        assert_relative_eq!(fractional_constant(1, 0.5), 1.0 / PI, max_relative = 1e-13);
        let k = make_fractional_kernel(1, 0.5).unwrap();
        assert_relative_eq!(k.eval(&[2.0]), 1.0 / (4.0 * PI), max_relative = 1e-13);
    }

    #[test]
    fn fractional_kernel_even_and_power_law() {
        let k = make_fractional_kernel(1, 0.5).unwrap();
        for z in [0.1, 1.0, 7.0] {
            assert_eq!(k.eval(&[z]), k.eval(&[-z]));
        }
        let k2 = make_fractional_kernel(2, 0.3).unwrap();
        let c = k2.eval(&[1.0, 0.0]);
        for z in [[0.2, 0.1], [3.0, -4.0], [-0.01, 0.5]] {
            let r = norm(&z);
            assert_relative_eq!(k2.eval(&z) * r.powf(2.6), c, max_relative = 1e-13);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(make_fractional_kernel(1, 1.0).is_err());
        assert!(make_fractional_kernel(0, 0.5).is_err());
        assert!(KernelParams::new(2, 0.5, 2.0, 1.0).is_err());
    }

    #[test]
    fn constant_profile_matches_power_law() {
        let p = KernelParams::new(2, 0.4, 1.0, 1.0).unwrap();
        let k = make_anisotropic_kernel(p, |_| 1.0).unwrap();
        assert!(k.is_isotropic());
        for z in [[0.3, 0.4], [-2.0, 1.0]] {
            assert_eq!(k.eval(&z), norm(&z).powf(-2.8));
        }
    }

    #[test]
    fn cos_squared_profile_accepted() {
        let p = KernelParams::new(2, 0.5, 1.0, 1.5).unwrap();
        let k = make_anisotropic_kernel(p, |d| 1.0 + 0.5 * d[0] * d[0]).unwrap();
        assert!(!k.is_isotropic());
        assert!(validate_kernel(&k, 1000).passed);
    }

    #[test]
    fn odd_profile_rejected() {
        let p = KernelParams::new(2, 0.5, 0.5, 1.5).unwrap();
        let err = make_anisotropic_kernel(p, |d| 1.0 + 0.5 * d[0]).unwrap_err();
        match err {
            Error::KernelValidation { reason, .. } => assert!(reason.contains("even")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation_of_fractional_kernel_is_exact() {
        let k = make_fractional_kernel(3, 0.7).unwrap();
        let rep = validate_kernel(&k, 1000);
        assert!(rep.passed);
        assert_eq!(rep.max_evenness_violation, 0.0);
        assert_eq!(rep.max_lower_violation, 0.0);
        assert_eq!(rep.max_upper_violation, 0.0);
    }

    #[test]
    fn evenness_defect_detected() {
        // (1.1 - 0.9) / 1.0 relative to the symmetric mean
        let p = KernelParams::new(1, 0.25, 0.9, 1.1).unwrap();
        let k = Kernel::custom(p, "defect", |z: &[f64]| {
            z[0].abs().powf(-1.5) * (1.0 + 0.1 * z[0].signum())
        })
        .unwrap();
        let rep = validate_kernel(&k, 1000);
        assert!(!rep.passed);
        assert_relative_eq!(rep.max_evenness_violation, 0.2, max_relative = 1e-12);
    }

    #[test]
    fn undersized_upper_bound_reported() {
        let p = KernelParams::new(2, 0.5, 1.0, 1.2).unwrap();
        let k = Kernel::custom(p, "too-big", |z: &[f64]| {
            let r = norm(z);
            (1.0 + 0.5 * (z[0] / r).powi(2)) * r.powi(-3)
        })
        .unwrap();
        let rep = validate_kernel(&k, 1000);
        assert!(!rep.passed);
        assert_relative_eq!(
            rep.max_upper_violation,
            1.5 / 1.2 - 1.0,
            max_relative = 1e-9
        );
        // worst violation sits on the first axis, where the profile is largest
        let w = &rep.worst_upper_point;
        assert!(w[1].abs() < 1e-9 * w[0].abs());
    }

    #[test]
    fn lowering_lambda_keeps_values() {
        let k = make_fractional_kernel(2, 0.5).unwrap();
        let lowered = k
            .clone()
            .with_lower_bound(k.params().lambda / 10.0)
            .unwrap();
        assert_eq!(k.eval(&[0.3, 0.7]), lowered.eval(&[0.3, 0.7]));
        assert!(k.clone().with_lower_bound(1.0).is_err());
    }

    #[test]
    fn table_kernel_interpolates_and_wraps() {
        let p = KernelParams::new(2, 0.5, 1.0, 2.0).unwrap();
        let table = [
            (0.0, 2.0),
            (PI / 2.0, 1.0),
            (PI, 2.0),
            (3.0 * PI / 2.0, 1.0),
        ];
        let k = make_table_kernel(p, &table).unwrap();
        let a = |ang: f64| k.profile(&[ang.cos(), ang.sin()]).unwrap();
        assert_relative_eq!(a(PI / 4.0), 1.5, max_relative = 1e-12);
        assert_relative_eq!(a(-PI / 4.0), 1.5, max_relative = 1e-12);
        assert_relative_eq!(a(7.0 * PI / 4.0 + 1e-9), 1.5, max_relative = 1e-6);
    }
}
