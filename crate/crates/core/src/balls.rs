//! Adaptive integration of point functions over balls and annuli, in polar
//! coordinates about a centre. Used for masses, pairings and residuals, where the
//! integrand itself may be an operator evaluation that can fail.

use std::sync::Mutex;

use crate::adaptive::{self, Settings};
use crate::error::{Error, Result};
use crate::geometry::SphereRule;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Polar {
    pub value: f64,
    pub error: f64,
    /// Integral of the auxiliary component (typically a propagated error density).
    pub aux: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PolarSettings {
    pub tol: f64,
    pub abs_tol: f64,
    pub depth: u32,
}

/// Integrates `f(x) = (value, aux)` over `{c + r theta : r in [pts_0, pts_last]}` with the
/// radial breakpoints `pts`. Evaluations run in parallel.
pub(crate) fn integrate<F>(
    center: &[f64],
    pts: &[f64],
    rule: &SphereRule,
    settings: PolarSettings,
    f: F,
) -> Result<Polar>
where
    F: Fn(&[f64]) -> Result<(f64, f64)> + Sync,
{
    let n = center.len();
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let integrand = |j: usize, r: f64| {
        let d = &rule.dirs[j];
        let mut x = [0.0; 3];
        for i in 0..n {
            x[i] = center[i] + r * d[i];
        }
        let jac = r.powi(n as i32 - 1);
        match f(&x[..n]) {
            Ok((v, a)) => (v * jac, a * jac),
            Err(e) => {
                let mut slot = failure.lock().unwrap();
                if slot.is_none() {
                    *slot = Some(e);
                }
                (f64::NAN, 0.0)
            }
        }
    };
    let outcome = adaptive::integrate(
        &integrand,
        &rule.weights,
        adaptive::segments_for(rule.len(), pts),
        0.0,
        Settings {
            tol: settings.tol,
            abs_tol: settings.abs_tol,
            max_depth: settings.depth,
            parallel: true,
        },
    );
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    if !outcome.value.is_finite() {
        return Err(Error::Domain(center.to_vec()));
    }
    if !outcome.converged {
        return Err(Error::AccuracyNotReached {
            best: outcome.value,
            estimate: outcome.error,
        });
    }
    Ok(Polar {
        value: outcome.value,
        error: outcome.error,
        aux: outcome.aux,
        evaluations: outcome.evaluations,
    })
}

/// Radial rule when the integrand is radial, otherwise the full product rule.
pub(crate) fn rule_for(n: usize, radial: bool, angular: usize) -> Result<SphereRule> {
    if radial {
        SphereRule::radial(n)
    } else {
        SphereRule::full(n, angular)
    }
}

/// Breakpoints `lo, ..., hi` through every power of two in between, plus `extra`.
pub(crate) fn dyadic_points(lo: f64, hi: f64, extra: &[f64]) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    let mut r = 2f64.powi(-4);
    while r < hi {
        if r > lo {
            pts.push(r);
        }
        r *= 2.0;
    }
    pts.extend(extra.iter().copied().filter(|&v| v > lo && v < hi));
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * a.abs().max(b.abs()));
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn settings() -> PolarSettings {
        PolarSettings {
            tol: 1e-10,
            abs_tol: 0.0,
            depth: 30,
        }
    }

    #[test]
    fn gaussian_over_disc() {
        // int_{|x| < 3} exp(-|x|^2) dx = pi (1 - e^{-9})
        let rule = SphereRule::full(2, 16).unwrap();
        let out = integrate(&[0.0, 0.0], &[0.0, 3.0], &rule, settings(), |x| {
            Ok(((-x[0] * x[0] - x[1] * x[1]).exp(), 1.0))
        })
        .unwrap();
        assert_relative_eq!(out.value, PI * (1.0 - (-9f64).exp()), max_relative = 1e-10);
        assert_relative_eq!(out.aux, 9.0 * PI, max_relative = 1e-10);
    }

    #[test]
    fn off_centre_ball() {
        // int over B_1((2, 0, 0)) of x_1 = 2 |B_1|
        let rule = SphereRule::full(3, 8).unwrap();
        let out = integrate(&[2.0, 0.0, 0.0], &[0.0, 1.0], &rule, settings(), |x| {
            Ok((x[0], 0.0))
        })
        .unwrap();
        assert_relative_eq!(out.value, 8.0 * PI / 3.0, max_relative = 1e-10);
    }

    #[test]
    fn failures_propagate() {
        let rule = SphereRule::radial(1).unwrap();
        let out = integrate(&[0.0], &[0.0, 1.0], &rule, settings(), |x| {
            if x[0] > 0.5 {
                Err(Error::Domain(x.to_vec()))
            } else {
                Ok((1.0, 0.0))
            }
        });
        assert!(matches!(out, Err(Error::Domain(_))));
    }

    #[test]
    fn dyadic_points_cover_range() {
        let p = dyadic_points(0.0, 10.0, &[3.0]);
        assert_eq!(p[0], 0.0);
        assert_eq!(*p.last().unwrap(), 10.0);
        assert!(p.contains(&8.0) && p.contains(&3.0) && p.contains(&0.0625));
    }
}
