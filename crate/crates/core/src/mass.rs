//! Local masses `S(R) = int_{B_R} u^q`, the tail functional, the growth bound
//! `S(R) <= C R^n` and the dyadic recursive inequality
//!
//! ```text
//! S(R) <= C R^a sum_k 2^{-kb} S(2^{k+1} R)^{1/q},   a = n - 2s - n/q,  b = 2s + n/q.
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balls::{self, dyadic_points, PolarSettings};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{check_dimension, sphere_area};
use crate::kernels::KernelParams;

/// Relative accuracy requested from every mass quadrature.
pub const MASS_TOL: f64 = 1e-10;
pub const DEFAULT_KMAX: u32 = 40;
/// Angular resolution used for non-radial fields when none is given.
pub const DEFAULT_ANGULAR: usize = 64;
/// Largest admissible ratio of the series remainder bound to the partial sum.
pub const REMAINDER_LIMIT: f64 = 0.1;

const SETTINGS: PolarSettings = PolarSettings {
    tol: MASS_TOL,
    abs_tol: 0.0,
    depth: 40,
};

fn nonnegative(u: &ScalarField, x: &[f64]) -> Result<f64> {
    let v = u.try_eval(x)?;
    if v < 0.0 {
        return Err(Error::NegativeSample {
            value: v,
            point: x.to_vec(),
        });
    }
    Ok(v)
}

fn check_q(q: f64) -> Result<()> {
    if q > 1.0 && q.is_finite() {
        Ok(())
    } else {
        Err(Error::ParameterDomain(format!(
            "q = {q} must be a finite real > 1"
        )))
    }
}

/// `int_{lo < |x| < hi} u^q dx`.
fn shell_mass(u: &ScalarField, q: f64, lo: f64, hi: f64, angular: usize) -> Result<f64> {
    let n = u.dimension();
    let rule = balls::rule_for(n, u.is_radial(), angular)?;
    let extra: Vec<f64> = u.support_radius().into_iter().collect();
    let out = balls::integrate(
        &vec![0.0; n],
        &dyadic_points(lo, hi, &extra),
        &rule,
        SETTINGS,
        |x| Ok((nonnegative(u, x)?.powf(q), 0.0)),
    )?;
    Ok(out.value)
}

/// `S(R) = int_{B_R} u^q dx`; `angular` is used only for non-radial `u`.
pub fn mass(u: &ScalarField, q: f64, radius: f64, angular: usize) -> Result<f64> {
    check_dimension(u.dimension())?;
    check_q(q)?;
    if !(radius > 0.0) {
        return Err(Error::ParameterDomain(format!(
            "radius {radius} must be positive"
        )));
    }
    shell_mass(u, q, 0.0, radius, angular)
}

/// `int_{B_R} u dx` (no sign requirement).
pub fn ball_integral(u: &ScalarField, radius: f64, angular: usize) -> Result<f64> {
    let n = u.dimension();
    check_dimension(n)?;
    let rule = balls::rule_for(n, u.is_radial(), angular)?;
    let out = balls::integrate(
        &vec![0.0; n],
        &dyadic_points(0.0, radius, &[]),
        &rule,
        SETTINGS,
        |x| Ok((u.try_eval(x)?, 0.0)),
    )?;
    Ok(out.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    /// `int_{B_{R_out}} u(x) (1 + |x|)^{-n-2s} dx`.
    pub ball: f64,
    /// Bound on the same integral over `|x| > R_out` from the declared decay.
    pub tail_bound: f64,
    /// `ball + tail_bound`.
    pub value: f64,
}

pub fn tail_functional(u: &ScalarField, k: &KernelParams, r_out: f64) -> Result<TailEstimate> {
    let n = k.n;
    check_dimension(n)?;
    if u.dimension() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: u.dimension(),
        });
    }
    let tail_bound = match (u.support_radius(), u.decay()) {
        (Some(rho), _) if rho <= r_out => 0.0,
        (_, Some(d)) => {
            let rate = d.beta + 2.0 * k.s;
            if rate <= 0.0 {
                return Err(Error::TailSpace(format!(
                    "decay exponent {} with s = {}: the tail integral diverges",
                    d.beta, k.s
                )));
            }
            // r^{n-1} (1 + r)^{-beta-n-2s} <= (1 + r)^{-beta-2s-1}
            d.constant * sphere_area(n) * (1.0 + r_out).powf(-rate) / rate
        }
        _ => {
            return Err(Error::Precondition(format!(
                "field '{}' declares no decay; tail membership cannot be decided",
                u.label()
            )))
        }
    };
    let weight = k.decay();
    let rule = balls::rule_for(n, u.is_radial(), DEFAULT_ANGULAR)?;
    let out = balls::integrate(
        &vec![0.0; n],
        &dyadic_points(0.0, r_out, &[]),
        &rule,
        SETTINGS,
        |x| {
            let r: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            Ok((u.try_eval(x)? * (1.0 + r).powf(-weight), 0.0))
        },
    )?;
    Ok(TailEstimate {
        ball: out.value,
        tail_bound,
        value: out.value + tail_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassProfile {
    pub q: f64,
    pub radii: Vec<f64>,
    pub masses: Vec<f64>,
    /// Tail functional upper estimate, when it could be computed.
    pub tail_value: Option<f64>,
}

/// Masses at increasing `radii`, computed as prefix sums of shell masses.
pub fn mass_profile(
    u: &ScalarField,
    q: f64,
    k: &KernelParams,
    radii: &[f64],
    angular: usize,
) -> Result<MassProfile> {
    check_q(q)?;
    let masses = masses_at(u, q, radii, angular)?;
    let tail_value = tail_functional(u, k, radii.last().copied().unwrap_or(1.0).max(1e3))
        .ok()
        .map(|t| t.value);
    Ok(MassProfile {
        q,
        radii: radii.to_vec(),
        masses,
        tail_value,
    })
}

/// `S` at each of `radii` (any order); shells between consecutive sorted radii are
/// integrated independently and summed.
fn masses_at(u: &ScalarField, q: f64, radii: &[f64], angular: usize) -> Result<Vec<f64>> {
    check_dimension(u.dimension())?;
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::ParameterDomain(format!(
            "radius {r} must be positive and finite"
        )));
    }
    if radii.is_empty() {
        return Ok(Vec::new());
    }
    let mut sorted = radii.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let bounds: Vec<(f64, f64)> = std::iter::once((0.0, sorted[0]))
        .chain(sorted.windows(2).map(|w| (w[0], w[1])))
        .collect();
    let shells: Vec<f64> = bounds
        .par_iter()
        .map(|&(lo, hi)| shell_mass(u, q, lo, hi, angular))
        .collect::<Result<_>>()?;
    let mut prefix = Vec::with_capacity(shells.len());
    let mut acc = 0.0;
    for s in shells {
        acc += s;
        prefix.push(acc);
    }
    Ok(radii
        .iter()
        .map(|r| prefix[sorted.partition_point(|v| v < r)])
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    /// `(R, S(R) / R^n)`.
    pub normalized: Vec<(f64, f64)>,
    pub sup: f64,
    pub argmax_radius: f64,
    pub attained_at_smallest: bool,
    pub monotone: bool,
}

pub fn verify_growth_bound(profile: &MassProfile, n: usize) -> GrowthReport {
    let normalized: Vec<(f64, f64)> = profile
        .radii
        .iter()
        .zip(&profile.masses)
        .map(|(&r, &m)| (r, m / r.powi(n as i32)))
        .collect();
    let (argmax_radius, sup) =
        normalized
            .iter()
            .copied()
            .fold((f64::NAN, f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
    let smallest = profile.radii.iter().copied().fold(f64::INFINITY, f64::min);
    let mut order: Vec<usize> = (0..profile.radii.len()).collect();
    order.sort_by(|&i, &j| profile.radii[i].total_cmp(&profile.radii[j]));
    let monotone = order
        .windows(2)
        .all(|w| profile.masses[w[1]] >= profile.masses[w[0]] * (1.0 - MASS_TOL));
    GrowthReport {
        normalized,
        sup,
        argmax_radius,
        attained_at_smallest: argmax_radius == smallest,
        monotone,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DyadicStatus {
    Ok,
    /// `S(R)` and the whole partial sum vanish.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicRow {
    pub radius: f64,
    pub mass: f64,
    pub partial_sum: f64,
    pub remainder_bound: f64,
    /// `S(R) / (R^a partial_sum)`; absent for degenerate rows.
    pub ratio: Option<f64>,
    pub status: DyadicStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicCheck {
    pub a: f64,
    pub b: f64,
    pub k_max: u32,
    /// `sup S(r) / r^n` over all computed radii `r >= 1`.
    pub growth_sup: f64,
    pub rows: Vec<DyadicRow>,
    /// Largest ratio: the empirical constant.
    pub constant: Option<f64>,
    /// max / min ratio over non-degenerate rows.
    pub variation: Option<f64>,
}

/// `(a, b) = (n - 2s - n/q, 2s + n/q)`.
pub fn dyadic_exponents(n: usize, s: f64, q: f64) -> (f64, f64) {
    let nq = n as f64 / q;
    (n as f64 - 2.0 * s - nq, 2.0 * s + nq)
}

pub fn verify_dyadic_inequality(
    u: &ScalarField,
    q: f64,
    k: &KernelParams,
    radii: &[f64],
    k_max: u32,
) -> Result<DyadicCheck> {
    verify_dyadic_inequality_with(u, q, k, radii, k_max, DEFAULT_ANGULAR)
}

pub fn verify_dyadic_inequality_with(
    u: &ScalarField,
    q: f64,
    k: &KernelParams,
    radii: &[f64],
    k_max: u32,
    angular: usize,
) -> Result<DyadicCheck> {
    check_q(q)?;
    k.validate()?;
    let n = k.n;
    if u.dimension() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: u.dimension(),
        });
    }
    if let Some(r) = radii.iter().find(|r| !(**r >= 1.0)) {
        return Err(Error::ParameterDomain(format!(
            "dyadic radii must be >= 1, got {r}"
        )));
    }
    let (a, b) = dyadic_exponents(n, k.s, q);

    // ladder cache: every radius the k-sums touch, computed once
    let mut needed: Vec<f64> = Vec::new();
    for &r in radii {
        needed.push(r);
        needed.extend((0..=k_max).map(|j| 2f64.powi(j as i32 + 1) * r));
    }
    let values = masses_at(u, q, &needed, angular)?;
    let lookup = |r: f64| values[needed.iter().position(|v| *v == r).expect("cached radius")];
    let growth_sup = needed
        .iter()
        .zip(&values)
        .filter(|(r, _)| **r >= 1.0)
        .map(|(r, m)| m / r.powi(n as i32))
        .fold(0.0, f64::max);

    let tail = 2f64.powf(-2.0 * k.s * (k_max + 1) as f64) / (1.0 - 2f64.powf(-2.0 * k.s));
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let s_r = lookup(r);
        let partial: f64 = (0..=k_max)
            .map(|j| 2f64.powf(-(j as f64) * b) * lookup(2f64.powi(j as i32 + 1) * r).powf(1.0 / q))
            .sum();
        // S(2^{k+1} R) <= G (2^{k+1} R)^n turns the remainder into a geometric series in 2^{-2s}
        let remainder = growth_sup.powf(1.0 / q) * (2.0 * r).powf(n as f64 / q) * tail;
        if s_r == 0.0 && partial == 0.0 {
            rows.push(DyadicRow {
                radius: r,
                mass: 0.0,
                partial_sum: 0.0,
                remainder_bound: remainder,
                ratio: None,
                status: DyadicStatus::Degenerate,
            });
            continue;
        }
        if remainder > REMAINDER_LIMIT * partial {
            return Err(Error::KmaxTooSmall {
                k_max: k_max as usize,
                radius: r,
                remainder,
                partial,
            });
        }
        rows.push(DyadicRow {
            radius: r,
            mass: s_r,
            partial_sum: partial,
            remainder_bound: remainder,
            ratio: Some(s_r / (r.powf(a) * partial)),
            status: DyadicStatus::Ok,
        });
    }
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let constant = ratios.iter().copied().reduce(f64::max);
    let variation = (!ratios.is_empty()).then(|| crate::operator::spread(&ratios));
    Ok(DyadicCheck {
        a,
        b,
        k_max,
        growth_sup,
        rows,
        constant,
        variation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{constant, power_decay};
    use approx::assert_relative_eq;

    fn params(n: usize, s: f64) -> KernelParams {
        KernelParams::new(n, s, 1.0, 1.0).unwrap()
    }

    #[test]
    fn constant_masses() {
        assert_relative_eq!(
            mass(&constant(1, 1.0), 3.0, 2.0, 8).unwrap(),
            4.0,
            max_relative = 1e-12
        );
        assert_eq!(mass(&constant(2, 0.0), 2.0, 5.0, 8).unwrap(), 0.0);
        assert_relative_eq!(
            mass(&constant(2, 2.0), 2.0, 1.0, 8).unwrap(),
            4.0 * std::f64::consts::PI,
            max_relative = 1e-12
        );
    }

    #[test]
    fn power_mass_matches_antiderivative() {
        // 2 int_0^R (1 + r)^{-beta q} dr = 2 (1 - (1 + R)^{1 - beta q}) / (beta q - 1)
        let (beta, q) = (2.0, 1.5);
        let u = power_decay(1, beta, 1.0);
        for r in [1.0f64, 10.0, 1e4] {
            let exact = 2.0 * (1.0 - (1.0 + r).powf(1.0 - beta * q)) / (beta * q - 1.0);
            assert_relative_eq!(mass(&u, q, r, 8).unwrap(), exact, max_relative = 1e-9);
        }
    }

    #[test]
    fn negative_samples_rejected() {
        assert!(matches!(
            mass(&constant(1, -1.0), 2.0, 1.0, 8),
            Err(Error::NegativeSample { .. })
        ));
    }

    #[test]
    fn tail_functional_examples() {
        let t = tail_functional(&constant(1, 1.0), &params(1, 0.5), 1e3).unwrap();
        assert_relative_eq!(t.value, 2.0, max_relative = 1e-9);
        assert!(tail_functional(&power_decay(1, 1.0 / 6.0, 1.0), &params(1, 0.25), 1e3).is_ok());
        assert!(matches!(
            tail_functional(&power_decay(1, -1.0, 1.0), &params(1, 0.25), 1e3),
            Err(Error::TailSpace(_))
        ));
    }

    #[test]
    fn growth_of_constant_and_bump() {
        let radii = [1.0, 2.0, 4.0, 8.0];
        let p = mass_profile(&constant(1, 1.0), 2.0, &params(1, 0.5), &radii, 8).unwrap();
        let g = verify_growth_bound(&p, 1);
        for (_, v) in &g.normalized {
            assert_relative_eq!(*v, 2.0, max_relative = 1e-12);
        }
        let bump = crate::operator::make_bump(1).unwrap();
        let p = mass_profile(&bump, 2.0, &params(1, 0.5), &radii, 8).unwrap();
        let g = verify_growth_bound(&p, 1);
        assert!(g.monotone);
        assert!(g.normalized.windows(2).skip(1).all(|w| w[1].1 < w[0].1));
    }

    #[test]
    fn exponents_sum_to_dimension() {
        for n in 1..6 {
            for s in [0.1, 0.5, 0.9] {
                for q in [1.1, 2.0, 7.0] {
                    let (a, b) = dyadic_exponents(n, s, q);
                    assert!((a + b - n as f64).abs() <= 4.0 * f64::EPSILON * n as f64);
                    assert!(b > 2.0 * s);
                }
            }
        }
    }

    #[test]
    fn zero_field_is_degenerate() {
        let check =
            verify_dyadic_inequality(&constant(1, 0.0), 1.5, &params(1, 0.25), &[1.0, 2.0], 40)
                .unwrap();
        assert!(check
            .rows
            .iter()
            .all(|r| r.status == DyadicStatus::Degenerate));
        assert_eq!(check.constant, None);
    }

    #[test]
    fn small_kmax_is_rejected() {
        let u = power_decay(1, 2.0, 1.0);
        assert!(matches!(
            verify_dyadic_inequality(&u, 1.5, &params(1, 0.25), &[1.0], 2),
            Err(Error::KmaxTooSmall { .. })
        ));
    }
}
