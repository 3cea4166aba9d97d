//! Exponent and constant recursions
//!
//! ```text
//! gamma_{m+1} = a + gamma_m / q,    C_{m+1} = Cbar C_m^{1/q},
//! ```
//!
//! regime classification against the Serrin exponent `q_S = n / (n - 2s)`, and the
//! split of the critical-case pairing into a near part `J1` and a far part `J2`.

use serde::{Deserialize, Serialize};

use crate::balls::{self, dyadic_points};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::sphere_area;
use crate::kernels::Kernel;
use crate::mass::{ball_integral, dyadic_exponents};
use crate::operator::{
    cutoff_integral, cutoff_lp_integral, inner_constant, spread, CutoffFamily, EXTERIOR_ANNULI,
};
use crate::quadrature::QuadratureConfig;

/// Closed form and iteration must agree to this absolute tolerance.
pub const CLOSED_FORM_TOL: f64 = 1e-12;
/// Iterated exponents this close to zero make the sign at index `M` ambiguous.
pub const TIE_ZONE: f64 = 1e-9;
/// `|q - q_S|` below which `q` counts as critical.
pub const CRITICAL_TOL: f64 = 1e-12;
pub const DEFAULT_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeInput {
    pub n: usize,
    pub s: f64,
    pub q: f64,
}

impl RegimeInput {
    pub fn new(n: usize, s: f64, q: f64) -> Result<Self> {
        let input = Self { n, s, q };
        input.validate()?;
        Ok(input)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::ParameterDomain("n must be >= 1".into()));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::ParameterDomain(format!(
                "s = {} not in (0, 1)",
                self.s
            )));
        }
        if !(self.q > 1.0 && self.q.is_finite()) {
            return Err(Error::ParameterDomain(format!(
                "q = {} must be a finite real > 1",
                self.q
            )));
        }
        Ok(())
    }

    /// `q_S = n / (n - 2s)` when `n > 2s`.
    pub fn serrin_exponent(&self) -> Option<f64> {
        let n = self.n as f64;
        (n > 2.0 * self.s).then(|| n / (n - 2.0 * self.s))
    }

    /// `(a, b)` of the dyadic inequality.
    pub fn exponents(&self) -> (f64, f64) {
        dyadic_exponents(self.n, self.s, self.q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    SubcriticalTrivial,
    CriticalTrivial,
    SupercriticalSharpness,
    LowDimensionTrivial,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::SubcriticalTrivial => "subcritical-trivial",
            Self::CriticalTrivial => "critical-trivial",
            Self::SupercriticalSharpness => "supercritical-sharpness",
            Self::LowDimensionTrivial => "low-dimension-trivial",
        }
    }

    pub fn is_trivial(&self) -> bool {
        *self != Self::SupercriticalSharpness
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub a: f64,
    pub b: f64,
    pub q: f64,
    /// `gamma_0, ..., gamma_steps`.
    pub gammas: Vec<f64>,
    pub closed_form: Vec<f64>,
    pub max_closed_form_error: f64,
    pub gamma_inf: f64,
    pub c0: f64,
    pub cbar: f64,
    /// `C_0, ..., C_steps`.
    pub constants: Vec<f64>,
    pub ln_constant_limit: f64,
    pub constant_limit: f64,
    /// First index with a negative exponent, as reported.
    pub first_negative: Option<usize>,
    pub first_negative_iterated: Option<usize>,
    pub first_negative_closed_form: Option<usize>,
    /// Set when an exponent next to the closed-form index sat within [`TIE_ZONE`] of
    /// zero; the two indices may then differ by one and the iterated one is reported.
    pub tie_zone: bool,
    /// `1 / (1 - 2^{-2s})`, bounding every `sum_k 2^{-k (b - gamma_m / q)}`.
    pub sigma_bound: f64,
    /// Largest geometric sum over the trace entries with `gamma_m <= gamma_0`.
    pub sigma_max: f64,
}

/// `gamma_inf = a / (1 - 1/q)`.
pub fn fixed_point(a: f64, q: f64) -> f64 {
    a / (1.0 - 1.0 / q)
}

/// Runs the recursion from `gamma0` with explicit `a` (the exponent `b` is taken as
/// `gamma0 - a`, matching `a + b = n` when `gamma0 = n`).
pub fn iterate_recurrence(
    a: f64,
    q: f64,
    gamma0: f64,
    c0: f64,
    cbar: f64,
    steps: usize,
) -> Result<IterationTrace> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::ParameterDomain(format!(
            "q = {q} must be a finite real > 1"
        )));
    }
    if steps < 1 {
        return Err(Error::ParameterDomain("max steps must be >= 1".into()));
    }
    if !(c0 > 0.0 && cbar > 0.0) {
        return Err(Error::ParameterDomain(format!(
            "C0 = {c0} and Cbar = {cbar} must be positive"
        )));
    }
    let b = gamma0 - a;
    let gamma_inf = fixed_point(a, q);
    let mut gammas = Vec::with_capacity(steps + 1);
    let mut ln_c = Vec::with_capacity(steps + 1);
    gammas.push(gamma0);
    ln_c.push(c0.ln());
    for m in 0..steps {
        gammas.push(a + gammas[m] / q);
        ln_c.push(ln_c[m] / q + cbar.ln());
    }
    let closed_form: Vec<f64> = (0..=steps)
        .map(|m| gamma_inf + (gamma0 - gamma_inf) * q.powi(-(m as i32)))
        .collect();
    let max_closed_form_error = gammas
        .iter()
        .zip(&closed_form)
        .map(|(g, c)| (g - c).abs())
        .fold(0.0, f64::max);

    let first_negative_iterated = gammas.iter().position(|g| *g < 0.0);
    let first_negative_closed_form = (gamma_inf < 0.0 && gamma0 >= 0.0)
        .then(|| ((gamma0 - gamma_inf) / -gamma_inf).ln() / q.ln())
        .map(|m| m.ceil().max(0.0) as usize);
    let mut tie_zone = false;
    let first_negative = match (first_negative_iterated, first_negative_closed_form) {
        (it, Some(cf)) => {
            let near_zero = |m: usize| m <= steps && gammas[m].abs() <= TIE_ZONE;
            if (cf > 0 && near_zero(cf - 1)) || near_zero(cf) {
                // the sign at the boundary index is decided by the sequence itself
                tie_zone = true;
                it.or(Some(cf))
            } else if it == Some(cf) || (it.is_none() && cf > steps) {
                Some(cf)
            } else {
                return Err(Error::Consistency(format!(
                    "first negative index: iterated {it:?}, closed form {cf}"
                )));
            }
        }
        (Some(it), None) => {
            return Err(Error::Consistency(format!(
                "iterated exponent turns negative at {it} but the fixed point {gamma_inf} is not negative"
            )))
        }
        (None, None) => None,
    };

    let two_s = b - gamma0 / q;
    let sigma_bound = if two_s > 0.0 {
        1.0 / (1.0 - 2f64.powf(-two_s))
    } else {
        f64::INFINITY
    };
    let sigma_max = gammas
        .iter()
        .filter(|g| **g <= gamma0)
        .map(|g| {
            let e = b - g / q;
            if e > 0.0 {
                1.0 / (1.0 - 2f64.powf(-e))
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);

    let ln_constant_limit = q * cbar.ln() / (q - 1.0);
    Ok(IterationTrace {
        a,
        b,
        q,
        gammas,
        closed_form,
        max_closed_form_error,
        gamma_inf,
        c0,
        cbar,
        constants: ln_c.iter().map(|v| v.exp()).collect(),
        ln_constant_limit,
        constant_limit: ln_constant_limit.exp(),
        first_negative,
        first_negative_iterated,
        first_negative_closed_form,
        tie_zone,
        sigma_bound,
        sigma_max,
    })
}

pub fn iterate_exponents(
    input: &RegimeInput,
    c0: f64,
    cbar: f64,
    max_steps: usize,
) -> Result<IterationTrace> {
    input.validate()?;
    if regime_of(input) == Regime::SupercriticalSharpness {
        return Err(Error::Regime(format!(
            "q = {} exceeds q_S = {}: the iteration has no contraction to exploit",
            input.q,
            input.serrin_exponent().unwrap_or(f64::NAN)
        )));
    }
    let (a, _) = input.exponents();
    iterate_recurrence(a, input.q, input.n as f64, c0, cbar, max_steps)
}

fn regime_of(input: &RegimeInput) -> Regime {
    match input.serrin_exponent() {
        None => Regime::LowDimensionTrivial,
        Some(qs) if input.q < qs => Regime::SubcriticalTrivial,
        Some(qs) if input.q == qs => Regime::CriticalTrivial,
        Some(_) => Regime::SupercriticalSharpness,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub input: RegimeInput,
    pub regime: Regime,
    pub q_s: Option<f64>,
    pub a: f64,
    pub b: f64,
    pub trace: Option<IterationTrace>,
    pub narrative: String,
}

pub fn classify(input: &RegimeInput) -> Result<RegimeReport> {
    input.validate()?;
    let regime = regime_of(input);
    let (a, b) = input.exponents();
    let trace = if regime.is_trivial() {
        Some(iterate_exponents(input, 1.0, 1.0, DEFAULT_STEPS)?)
    } else {
        None
    };
    let narrative = match regime {
        Regime::LowDimensionTrivial => format!(
            "n = {} <= 2s = {}: every q > 1 is covered; a = {a:.6} < 0, so the mass bound \
             S(R) <= C R^a forces S = 0 as R grows",
            input.n,
            2.0 * input.s
        ),
        Regime::SubcriticalTrivial => format!(
            "q < q_S: a = {a:.6} < 0, the exponents gamma_m fall to gamma_inf = {:.6} and turn \
             negative at m = {}, so S(R) <= C_M R^(gamma_M) vanishes as R grows",
            fixed_point(a, input.q),
            trace
                .as_ref()
                .and_then(|t| t.first_negative)
                .map_or("?".into(), |m| m.to_string())
        ),
        Regime::CriticalTrivial => {
            "q = q_S: a = 0, gamma_m -> 0 and C_m stays bounded, so u lies in \
             L^q; splitting the pairing at a fixed radius then drives the mass to zero"
                .to_string()
        }
        Regime::SupercriticalSharpness => format!(
            "q > q_S: c (1 + |x|)^(-{:.6}) is a positive supersolution for small c",
            2.0 * input.s / (input.q - 1.0)
        ),
    };
    Ok(RegimeReport {
        input: *input,
        regime,
        q_s: input.serrin_exponent(),
        a,
        b,
        trace,
        narrative,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalSplit {
    pub rho: f64,
    pub scale: f64,
    /// `J1 = int_{B_rho} u |L phi_R|`.
    pub j1: f64,
    pub j1_error: f64,
    /// Empirical `sup |L phi_R| R^{2s}` over the inner sample grid.
    pub cutoff_constant: f64,
    /// `int_{B_rho} u`.
    pub near_mass: f64,
    /// `C R^{-2s} int_{B_rho} u`.
    pub j1_bound: f64,
    pub j1_within_bound: bool,
    /// `int_{|x| > rho} u^q`.
    pub far_lq: f64,
    /// `int |L phi_R|^{n/2s}`.
    pub cutoff_lp: f64,
    /// `(int_{|x| > rho} u^q)^{1/q} (int |L phi_R|^{n/2s})^{2s/n}`.
    pub j2_bound: f64,
}

fn critical_exponent(k: &Kernel, q: f64) -> Result<RegimeInput> {
    let p = k.params();
    let input = RegimeInput::new(p.n, p.s, q)?;
    match input.serrin_exponent() {
        Some(qs) if (q - qs).abs() <= CRITICAL_TOL => Ok(input),
        Some(qs) => Err(Error::Regime(format!(
            "q = {q} is not the critical exponent {qs}"
        ))),
        None => Err(Error::Regime(format!(
            "n = {} <= 2s: there is no critical exponent",
            p.n
        ))),
    }
}

/// Checks that the declared decay makes `int_{|x| > rho} u^q` finite.
pub fn check_far_lq(u: &ScalarField, q: f64) -> Result<()> {
    if u.support().is_some() {
        return Ok(());
    }
    match u.decay() {
        Some(d) if d.constant == 0.0 || q * d.beta > u.dimension() as f64 => Ok(()),
        Some(d) => Err(Error::Precondition(format!(
            "u^{q} is not integrable at infinity: decay exponent {} needs beta q > n = {}",
            d.beta,
            u.dimension()
        ))),
        None => Err(Error::Precondition(format!(
            "field '{}' declares neither decay nor support",
            u.label()
        ))),
    }
}

/// `int_{|x| > rho} u^q dx`, with the part beyond a large radius bounded from the decay.
fn far_lq(u: &ScalarField, q: f64, rho: f64, angular: usize) -> Result<f64> {
    let n = u.dimension();
    let (outer, tail) = match (u.support_radius(), u.decay()) {
        (Some(r), _) if r <= rho => return Ok(0.0),
        (Some(r), _) => (r, 0.0),
        (None, Some(d)) if d.constant == 0.0 => return Ok(0.0),
        (None, Some(d)) => {
            check_far_lq(u, q)?;
            let excess = q * d.beta - n as f64;
            let t = 2f64.powi(EXTERIOR_ANNULI + 1) * rho.max(1.0);
            (
                t,
                d.constant.powf(q) * sphere_area(n) * t.powf(-excess) / excess,
            )
        }
        (None, None) => {
            return Err(Error::Precondition(format!(
                "field '{}' declares neither decay nor support",
                u.label()
            )))
        }
    };
    let rule = balls::rule_for(n, u.is_radial(), angular)?;
    let out = balls::integrate(
        &vec![0.0; n],
        &dyadic_points(rho, outer, &[]),
        &rule,
        crate::balls::PolarSettings {
            tol: 1e-10,
            abs_tol: 0.0,
            depth: 40,
        },
        |x| Ok((u.try_eval(x)?.abs().powf(q), 0.0)),
    )?;
    Ok(out.value + tail)
}

pub fn critical_tail_split(
    u: &ScalarField,
    k: &Kernel,
    q: f64,
    rho: f64,
    scale: f64,
    cfg: &QuadratureConfig,
) -> Result<CriticalSplit> {
    let input = critical_exponent(k, q)?;
    if !(rho > 0.0 && rho < scale) {
        return Err(Error::ParameterDomain(format!(
            "need 0 < rho < R, got rho = {rho}, R = {scale}"
        )));
    }
    if u.dimension() != input.n {
        return Err(Error::DimensionMismatch {
            expected: input.n,
            got: u.dimension(),
        });
    }
    cfg.validate()?;
    check_far_lq(u, q)?;
    let family = CutoffFamily::new(input.n, scale)?;
    let two_s = 2.0 * input.s;

    let near = cutoff_integral(k, &family, cfg, u.is_radial(), rho, |x, l| {
        let v = u.try_eval(x)?;
        Ok((v * l.value.abs(), v.abs() * l.error_estimate))
    })?;
    let cutoff_constant = inner_constant(k, &family, cfg)?;
    let near_mass = ball_integral(u, rho, cfg.angular)?;
    let j1_bound = cutoff_constant * scale.powf(-two_s) * near_mass;
    let j1_error = near.error + near.aux;

    let far = far_lq(u, q, rho, cfg.angular)?;
    let p = input.n as f64 / two_s;
    let lp = cutoff_lp_integral(k, &family, p, cfg)?;
    Ok(CriticalSplit {
        rho,
        scale,
        j1: near.value,
        j1_error,
        cutoff_constant,
        near_mass,
        j1_bound,
        j1_within_bound: near.value <= j1_bound * (1.0 + cfg.tol) + j1_error,
        far_lq: far,
        cutoff_lp: lp.integral,
        j2_bound: far.powf(1.0 / q) * lp.integral.powf(1.0 / p),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalScan {
    pub splits: Vec<CriticalSplit>,
    /// `J1(2R) / J1(R)` for consecutive scales.
    pub j1_ratios: Vec<f64>,
    /// `2^{-2s}`.
    pub expected_ratio: f64,
    /// max / min of `int |L phi_R|^{n/2s}` across the scales.
    pub lp_spread: f64,
}

/// [`critical_tail_split`] at `R = 4 rho, 8 rho, 16 rho`.
pub fn critical_scan(
    u: &ScalarField,
    k: &Kernel,
    q: f64,
    rho: f64,
    cfg: &QuadratureConfig,
) -> Result<CriticalScan> {
    let splits: Vec<CriticalSplit> = [4.0, 8.0, 16.0]
        .iter()
        .map(|m| critical_tail_split(u, k, q, rho, m * rho, cfg))
        .collect::<Result<_>>()?;
    let j1_ratios = splits.windows(2).map(|w| w[1].j1 / w[0].j1).collect();
    let lps: Vec<f64> = splits.iter().map(|s| s.cutoff_lp).collect();
    Ok(CriticalScan {
        expected_ratio: 2f64.powf(-2.0 * k.params().s),
        j1_ratios,
        lp_spread: spread(&lps),
        splits,
    })
}
