//! Fixed quadrature rules: the 7/15-point Gauss–Kronrod pair used by the adaptive
//! integrator, and Gauss–Jacobi rules generated by the Golub–Welsch method.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

/// Kronrod abscissae on [0, 1]; odd indices are the Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Gauss weights for nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// The 15 Kronrod nodes mapped to [a, b], in a fixed order.
pub(crate) fn gk15_nodes(a: f64, b: f64) -> [f64; 15] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut out = [0.0; 15];
    for k in 0..7 {
        out[2 * k] = c - h * XGK[k];
        out[2 * k + 1] = c + h * XGK[k];
    }
    out[14] = c;
    out
}

/// Kronrod value, |Kronrod - Gauss| and the Kronrod estimate of the integral of |f|,
/// from values laid out as in [`gk15_nodes`].
pub(crate) fn gk15_combine(a: f64, b: f64, f: &[f64; 15]) -> (f64, f64, f64) {
    let h = 0.5 * (b - a);
    let mut kron = WGK[7] * f[14];
    let mut gauss = WG[3] * f[14];
    let mut abs = WGK[7] * f[14].abs();
    for k in 0..7 {
        let pair = f[2 * k] + f[2 * k + 1];
        kron += WGK[k] * pair;
        abs += WGK[k] * (f[2 * k].abs() + f[2 * k + 1].abs());
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    (kron * h, ((kron - gauss) * h).abs(), abs * h.abs())
}

/// Nodes and weights of a Gauss rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss–Jacobi rule for the weight (1 - x)^alpha (1 + x)^beta on [-1, 1].
///
/// Nodes are eigenvalues of the Jacobi matrix of the monic recurrence; weights are
/// `mu0 * v0^2` with `v0` the first component of each normalized eigenvector.
pub fn gauss_jacobi(order: usize, alpha: f64, beta: f64) -> GaussRule {
    assert!(order >= 1, "rule order must be positive");
    assert!(
        alpha > -1.0 && beta > -1.0,
        "Jacobi exponents must exceed -1"
    );
    let ab = alpha + beta;
    let mut jac = DMatrix::<f64>::zeros(order, order);
    for k in 0..order {
        let kf = k as f64;
        let diag = if k == 0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            let t = 2.0 * kf + ab;
            (beta * beta - alpha * alpha) / (t * (t + 2.0))
        };
        jac[(k, k)] = diag;
        if k + 1 < order {
            let j = kf + 1.0;
            let t = 2.0 * j + ab;
            let b2 = if k == 0 {
                4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + ab).powi(2) * (3.0 + ab))
            } else {
                4.0 * j * (j + alpha) * (j + beta) * (j + ab) / (t * t * (t + 1.0) * (t - 1.0))
            };
            let off = b2.sqrt();
            jac[(k, k + 1)] = off;
            jac[(k + 1, k)] = off;
        }
    }
    let ln_mu0 = (ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(alpha + 1.0) + ln_gamma(beta + 1.0)
        - ln_gamma(ab + 2.0);
    let mu0 = ln_mu0.exp();
    let eig = jac.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    GaussRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

pub fn gauss_legendre(order: usize) -> GaussRule {
    gauss_jacobi(order, 0.0, 0.0)
}

type RuleKey = (usize, u64, u64);

/// Memoized [`gauss_jacobi`]; rules are shared across threads.
pub(crate) fn cached_jacobi(order: usize, alpha: f64, beta: f64) -> Arc<GaussRule> {
    static CACHE: OnceLock<Mutex<HashMap<RuleKey, Arc<GaussRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (order, alpha.to_bits(), beta.to_bits());
    if let Some(rule) = cache.lock().expect("rule cache poisoned").get(&key) {
        return Arc::clone(rule);
    }
    let rule = Arc::new(gauss_jacobi(order, alpha, beta));
    cache
        .lock()
        .expect("rule cache poisoned")
        .entry(key)
        .or_insert(rule)
        .clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kronrod_integrates_degree_21_exactly() {
        let f = |x: f64| x.powi(21) + 3.0 * x.powi(20) - x.powi(7);
        let nodes = gk15_nodes(0.0, 2.0);
        let vals = nodes.map(f);
        let (k, _, _) = gk15_combine(0.0, 2.0, &vals);
        let exact = 2f64.powi(22) / 22.0 + 3.0 * 2f64.powi(21) / 21.0 - 2f64.powi(8) / 8.0;
        assert_relative_eq!(k, exact, max_relative = 1e-13);
    }

    #[test]
    fn gauss_part_exact_for_degree_13() {
        // error estimate vanishes when the Gauss rule is already exact
        let f = |x: f64| 1.0 + x.powi(13) - 2.0 * x.powi(6);
        let vals = gk15_nodes(-1.0, 3.0).map(f);
        let (_, err, _) = gk15_combine(-1.0, 3.0, &vals);
        assert!(err < 1e-9, "err = {err}");
    }

    #[test]
    fn legendre_weights_sum_to_two() {
        for order in [1, 2, 5, 16, 32] {
            let rule = gauss_legendre(order);
            let sum: f64 = rule.weights.iter().sum();
            assert_relative_eq!(sum, 2.0, max_relative = 1e-13);
        }
    }

    #[test]
    fn jacobi_integrates_weighted_monomials() {
        // int_{-1}^{1} (1+x)^beta x^2 dx, with beta = -0.5
        let beta = -0.5;
        let rule = gauss_jacobi(10, 0.0, beta);
        let got: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(x, w)| w * x * x)
            .sum();
        // substitute t = 1 + x: int_0^2 t^beta (t-1)^2 dt
        let p = |e: f64| 2f64.powf(e) / e;
        let exact = p(beta + 3.0) - 2.0 * p(beta + 2.0) + p(beta + 1.0);
        assert_relative_eq!(got, exact, max_relative = 1e-12);
    }

    #[test]
    fn jacobi_beta_near_minus_half_sum() {
        // alpha + beta = -1 exercises the special first off-diagonal
        let rule = gauss_jacobi(6, -0.5, -0.5);
        let sum: f64 = rule.weights.iter().sum();
        assert_relative_eq!(sum, std::f64::consts::PI, max_relative = 1e-12);
    }
}
