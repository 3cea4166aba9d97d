//! Principal-value evaluation of `L_K u(x)` through the symmetrized second difference
//!
//! ```text
//! L_K u(x) = 1/2 int (2u(x) - u(x+z) - u(x-z)) K(z) dz
//! ```
//!
//! split radially into an inner core `|z| <= r_in` (Gauss–Jacobi with the kernel's
//! radial singularity as weight), a middle shell `r_in < |z| <= R_out` (adaptive G7/K15
//! over all directions at once) and an exterior `|z| > R_out`, where the `u(x)` part is
//! integrated exactly and the `u(x +- z)` part is bounded from the declared decay.

use serde::{Deserialize, Serialize};

use crate::adaptive::{self, breakpoints, Segment, Settings};
use crate::error::{Error, Result};
use crate::field::{ScalarField, Smoothness, SupportBall};
use crate::gauss::cached_jacobi;
use crate::geometry::{check_angular, check_dimension, norm, sphere_area, SphereRule};
use crate::kernels::Kernel;

const CORE_ORDER_LOW: usize = 10;
const CORE_ORDER_HIGH: usize = 20;
/// Ratio of the geometric ladder of initial breakpoints in the middle shell.
const LADDER_RATIO: f64 = 4.0;
/// Points whose distance to the support ball exceeds this multiple of its radius are
/// evaluated through the non-singular representation.
const FAR_FIELD_RATIO: f64 = 0.5;
/// Radial panels of the far-field integral over the support ball.
const FAR_FIELD_PANELS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    pub r_in: f64,
    #[serde(rename = "R_out", alias = "r_out")]
    pub r_out: f64,
    pub tol: f64,
    pub depth: u32,
    /// Azimuthal resolution; n = 3 uses `angular / 2` polar nodes.
    pub angular: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            r_in: 1e-3,
            r_out: 1e3,
            tol: 1e-6,
            depth: 30,
            angular: 64,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_in > 0.0 && self.r_in < self.r_out && self.r_out.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < r_in < R_out < inf, got r_in = {}, R_out = {}",
                self.r_in, self.r_out
            )));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tol = {} not in (0, 1)",
                self.tol
            )));
        }
        if self.depth < 1 {
            return Err(Error::InvalidConfig("depth must be >= 1".into()));
        }
        if self.angular < 1 {
            return Err(Error::InvalidConfig(
                "angular resolution must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn with_tol(self, tol: f64) -> Self {
        Self { tol, ..self }
    }

    pub fn with_r_out(self, r_out: f64) -> Self {
        Self { r_out, ..self }
    }

    pub fn with_r_in(self, r_in: f64) -> Self {
        Self { r_in, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    /// Quadrature error estimate plus `tail_bound`.
    pub error_estimate: f64,
    pub tail_bound: f64,
    pub evaluations: usize,
    /// Set when the field is declared rough: accuracy is not guaranteed.
    pub best_effort: bool,
}

/// `2u(x) - u(x+z) - u(x-z)`.
pub fn second_difference(u: &ScalarField, x: &[f64], z: &[f64]) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: z.len(),
        });
    }
    let plus: Vec<f64> = x.iter().zip(z).map(|(a, b)| a + b).collect();
    let minus: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - b).collect();
    Ok(2.0 * u.try_eval(x)? - u.try_eval(&plus)? - u.try_eval(&minus)?)
}

/// Checks shared by the operator-level entry points.
pub(crate) fn check_inputs(u: &ScalarField, k: &Kernel, x: &[f64]) -> Result<usize> {
    let n = k.dimension();
    check_dimension(n)?;
    if u.dimension() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: u.dimension(),
        });
    }
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    Ok(n)
}

struct Exterior {
    radius: f64,
    /// Bound on `1/2 int_{|z|>R} |u(x+z) + u(x-z)| K(z) dz`.
    bound: f64,
}

fn exterior(u: &ScalarField, k: &Kernel, x: &[f64], cfg: &QuadratureConfig) -> Result<Exterior> {
    let p = k.params();
    let n = p.n;
    if let Some(ball) = u.support() {
        let dc = norm(
            &x.iter()
                .zip(&ball.center)
                .map(|(a, c)| a - c)
                .collect::<Vec<_>>(),
        );
        return Ok(Exterior {
            radius: cfg.r_out.max(dc + ball.radius),
            bound: 0.0,
        });
    }
    let decay = u.decay().ok_or_else(|| {
        Error::Precondition(format!(
            "field '{}' declares neither decay nor compact support; the exterior cannot be bounded",
            u.label()
        ))
    })?;
    let rate = decay.beta + 2.0 * p.s;
    if rate <= 0.0 {
        return Err(Error::TailSpace(format!(
            "decay exponent {} with s = {} makes the exterior integral diverge",
            decay.beta, p.s
        )));
    }
    let radius = cfg.r_out.max(2.0 * norm(x)).max(1.0);
    // for |z| = r >= max(2|x|, 1): (1 + r - |x|)^{-beta} <= 2^{|beta|} r^{-beta}
    let bound = p.big_lambda
        * sphere_area(n)
        * decay.constant
        * 2f64.powf(decay.beta.abs())
        * radius.powf(-rate)
        / rate;
    Ok(Exterior { radius, bound })
}

/// Feature radii along rays from `x`: distances at which the integrand may lose
/// smoothness (origin, support boundary).
fn feature_radii(u: &ScalarField, x: &[f64]) -> Vec<f64> {
    let mut out = vec![norm(x)];
    if let Some(ball) = u.support() {
        let dc = norm(
            &x.iter()
                .zip(&ball.center)
                .map(|(a, c)| a - c)
                .collect::<Vec<_>>(),
        );
        out.extend([dc, (dc - ball.radius).abs(), dc + ball.radius]);
    }
    out
}

/// `L u(x) = -int_B u(y) K(y - x) dy` for `x` well outside the support ball `B`,
/// integrated in polar coordinates about the ball's centre.
fn far_field(
    u: &ScalarField,
    k: &Kernel,
    x: &[f64],
    ball: &SupportBall,
    cfg: &QuadratureConfig,
) -> Result<QuadResult> {
    let n = x.len();
    let rule = SphereRule::full(n, cfg.angular)?;
    let c = &ball.center;
    let integrand = |j: usize, rho: f64| {
        let d = &rule.dirs[j];
        let mut y = [0.0; 3];
        let mut z = [0.0; 3];
        for i in 0..n {
            y[i] = c[i] + rho * d[i];
            z[i] = y[i] - x[i];
        }
        let uy = u.eval(&y[..n]);
        if uy == 0.0 {
            return (0.0, 0.0);
        }
        (-uy * k.eval(&z[..n]) * rho.powi(n as i32 - 1), 0.0)
    };
    let pts: Vec<f64> = (0..=FAR_FIELD_PANELS)
        .map(|i| ball.radius * i as f64 / FAR_FIELD_PANELS as f64)
        .collect();
    let outcome = adaptive::integrate(
        &integrand,
        &rule.weights,
        adaptive::segments_for(rule.len(), &pts),
        0.0,
        Settings {
            tol: cfg.tol,
            abs_tol: 0.0,
            max_depth: cfg.depth,
            parallel: false,
        },
    );
    if !outcome.value.is_finite() {
        return Err(Error::Domain(x.to_vec()));
    }
    if !outcome.converged {
        return Err(Error::AccuracyNotReached {
            best: outcome.value,
            estimate: outcome.error,
        });
    }
    Ok(QuadResult {
        value: outcome.value,
        error_estimate: outcome.error,
        tail_bound: 0.0,
        evaluations: outcome.evaluations,
        best_effort: u.smoothness() == Smoothness::Rough,
    })
}

pub fn pv_integrate(
    u: &ScalarField,
    k: &Kernel,
    x: &[f64],
    cfg: &QuadratureConfig,
) -> Result<QuadResult> {
    let n = check_inputs(u, k, x)?;
    cfg.validate()?;
    check_angular(n, cfg.angular)?;
    if let Some(ball) = u.support() {
        let dc = norm(
            &x.iter()
                .zip(&ball.center)
                .map(|(a, c)| a - c)
                .collect::<Vec<_>>(),
        );
        if dc - ball.radius >= FAR_FIELD_RATIO * ball.radius {
            return far_field(u, k, x, ball, cfg);
        }
    }
    let p = *k.params();
    let s = p.s;
    let ux = u.try_eval(x)?;
    let ext = exterior(u, k, x, cfg)?;

    let rule = SphereRule::hemisphere(n, cfg.angular)?;
    let profiles: Option<Vec<f64>> = k.is_homogeneous().then(|| {
        rule.dirs
            .iter()
            .map(|d| k.profile(&d[..n]).expect("homogeneous kernel"))
            .collect()
    });
    let weights: Vec<f64> = rule.weights.iter().map(|w| 0.5 * w).collect();

    // D(x, r theta_j) K(r theta_j) r^{n-1}, with r^{n-1} replaced by r^{n-1-extra}
    // (integrand, roundoff scale of the second difference times the same weight)
    let radial = |j: usize, r: f64, extra: f64| -> (f64, f64) {
        let d = &rule.dirs[j];
        let mut plus = [0.0; 3];
        let mut minus = [0.0; 3];
        for i in 0..n {
            plus[i] = x[i] + r * d[i];
            minus[i] = x[i] - r * d[i];
        }
        let (up, um) = (u.eval(&plus[..n]), u.eval(&minus[..n]));
        let diff = 2.0 * ux - up - um;
        let noise = 2.0 * f64::EPSILON * (2.0 * ux.abs() + up.abs() + um.abs());
        if diff == 0.0 && noise == 0.0 {
            return (0.0, 0.0);
        }
        let kr = match &profiles {
            Some(a) => a[j] * r.powf(-p.decay()),
            None => {
                let mut z = [0.0; 3];
                for i in 0..n {
                    z[i] = r * d[i];
                }
                k.eval(&z[..n])
            }
        };
        let jac = kr * r.powf(n as f64 - 1.0 - extra);
        (diff * jac, noise * jac.abs())
    };

    // inner core: weight r^gamma absorbs the r^{-1-2s} (s < 1/2) or r^{1-2s} behaviour
    let gamma = if s < 0.5 { -2.0 * s } else { 1.0 - 2.0 * s };
    let low = cached_jacobi(CORE_ORDER_LOW, 0.0, gamma);
    let high = cached_jacobi(CORE_ORDER_HIGH, 0.0, gamma);
    let core = |j: usize, radius: f64, rule: &crate::gauss::GaussRule| -> (f64, f64) {
        let h = 0.5 * radius;
        let scale = h.powf(gamma + 1.0);
        let mut sum = 0.0;
        let mut floor = 0.0;
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            let (v, noise) = radial(j, h * (1.0 + t), gamma);
            sum += w * v;
            floor += w.abs() * (v.abs() * f64::EPSILON + noise);
        }
        (scale * sum, scale * floor)
    };

    let mut evaluations = 1usize;
    let mut inner_value = 0.0;
    let mut inner_error = 0.0;
    let mut segments: Vec<Segment> = Vec::new();
    for j in 0..rule.len() {
        // (hi, err) per level; the core at level l covers [0, r_in 2^-l]
        let mut levels: Vec<(f64, f64)> = Vec::new();
        let mut radius = cfg.r_in;
        let chosen = loop {
            let (lo, _) = core(j, radius, &low);
            let (hi, floor) = core(j, radius, &high);
            evaluations += 2 * (CORE_ORDER_LOW + CORE_ORDER_HIGH);
            let err = (hi - lo).abs();
            let level = levels.len();
            levels.push((hi, err));
            if err <= (cfg.tol * hi.abs()).max(16.0 * floor) {
                break level;
            }
            // shrinking stopped paying off: evaluation noise in the second difference,
            // amplified by the kernel singularity, now dominates
            if level > 0 && err >= levels[level - 1].1 {
                break level - 1;
            }
            if level as u32 >= cfg.depth {
                break level;
            }
            radius *= 0.5;
        };
        let (hi, err) = levels[chosen];
        inner_value += weights[j] * hi;
        inner_error += weights[j] * err;
        let mut r = cfg.r_in;
        for _ in 0..chosen {
            segments.push(Segment {
                stream: j,
                a: 0.5 * r,
                b: r,
                depth: 0,
            });
            r *= 0.5;
        }
    }

    let pts = breakpoints(cfg.r_in, ext.radius, LADDER_RATIO, &feature_radii(u, x));
    segments.extend(adaptive::segments_for(rule.len(), &pts));

    // exterior: u(x) int_{|z|>R} K, exact for homogeneous kernels
    let tail_mass = |lam: f64| lam * ext.radius.powf(-2.0 * s) / (2.0 * s);
    let (tail_value, tail_halfwidth) = match &profiles {
        Some(a) => {
            let sphere: f64 = a.iter().zip(&rule.weights).map(|(a, w)| a * w).sum();
            (ux * tail_mass(sphere), 0.0)
        }
        None => {
            let area = sphere_area(n);
            let mid = 0.5 * (p.lambda + p.big_lambda) * area;
            let half = 0.5 * (p.big_lambda - p.lambda) * area;
            (ux * tail_mass(mid), ux.abs() * tail_mass(half))
        }
    };

    let integrand = |j: usize, r: f64| (radial(j, r, 0.0).0, 0.0);
    let outcome = adaptive::integrate(
        &integrand,
        &weights,
        segments,
        inner_value + tail_value,
        Settings {
            tol: cfg.tol,
            abs_tol: 0.0,
            max_depth: cfg.depth,
            parallel: false,
        },
    );
    evaluations += outcome.evaluations;

    let value = inner_value + outcome.value + tail_value;
    let tail_bound = ext.bound + tail_halfwidth;
    let error_estimate = inner_error + outcome.error + tail_bound;
    if !value.is_finite() {
        return Err(Error::Domain(x.to_vec()));
    }
    if !outcome.converged {
        return Err(Error::AccuracyNotReached {
            best: value,
            estimate: error_estimate,
        });
    }
    Ok(QuadResult {
        value,
        error_estimate,
        tail_bound,
        evaluations,
        best_effort: u.smoothness() == Smoothness::Rough,
    })
}
