//! Unit-sphere rules and ball measures for n = 1, 2, 3.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::gauss::cached_jacobi;

/// Surface measure of the unit sphere S^{n-1}.
pub fn sphere_area(n: usize) -> f64 {
    let half = n as f64 / 2.0;
    2.0 * PI.powf(half) / statrs::function::gamma::gamma(half)
}

/// Lebesgue measure of the ball of radius `r` in R^n.
pub fn ball_volume(n: usize, r: f64) -> f64 {
    sphere_area(n) / n as f64 * r.powi(n as i32)
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn check_dimension(n: usize) -> Result<()> {
    if (1..=3).contains(&n) {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(n))
    }
}

/// Quadrature over directions. Points are stored padded to length 3.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub n: usize,
    pub dirs: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    /// Rule over the full sphere: sum of weights equals |S^{n-1}|.
    ///
    /// `angular` is the azimuthal count; n = 3 uses `angular / 2` Gauss–Legendre
    /// nodes in the polar cosine.
    pub fn full(n: usize, angular: usize) -> Result<Self> {
        check_dimension(n)?;
        match n {
            1 => Ok(Self {
                n,
                dirs: vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
                weights: vec![1.0, 1.0],
            }),
            2 => {
                let dphi = 2.0 * PI / angular as f64;
                let dirs = (0..angular)
                    .map(|j| {
                        let phi = (j as f64 + 0.5) * dphi;
                        [phi.cos(), phi.sin(), 0.0]
                    })
                    .collect();
                Ok(Self {
                    n,
                    dirs,
                    weights: vec![dphi; angular],
                })
            }
            _ => {
                let polar = cached_jacobi(angular / 2, 0.0, 0.0);
                let dphi = 2.0 * PI / angular as f64;
                let mut dirs = Vec::with_capacity(polar.nodes.len() * angular);
                let mut weights = Vec::with_capacity(dirs.capacity());
                for (mu, wmu) in polar.nodes.iter().zip(&polar.weights) {
                    let st = (1.0 - mu * mu).max(0.0).sqrt();
                    for j in 0..angular {
                        let phi = (j as f64 + 0.5) * dphi;
                        dirs.push([st * phi.cos(), st * phi.sin(), *mu]);
                        weights.push(wmu * dphi);
                    }
                }
                Ok(Self { n, dirs, weights })
            }
        }
    }

    /// Half of an antipodally closed [`SphereRule::full`], with doubled weights, so
    /// that for even integrands the weighted sum still equals the full-sphere integral.
    pub fn hemisphere(n: usize, angular: usize) -> Result<Self> {
        check_dimension(n)?;
        check_angular(n, angular)?;
        let full = Self::full(n, angular)?;
        let keep: Vec<usize> = match n {
            1 => vec![0],
            2 => (0..angular / 2).collect(),
            _ => (0..full.dirs.len())
                .filter(|&i| full.dirs[i][2] > 0.0)
                .collect(),
        };
        Ok(Self {
            n,
            dirs: keep.iter().map(|&i| full.dirs[i]).collect(),
            weights: keep.iter().map(|&i| 2.0 * full.weights[i]).collect(),
        })
    }

    /// A single direction carrying the whole sphere measure, for radial integrands.
    pub fn radial(n: usize) -> Result<Self> {
        check_dimension(n)?;
        Ok(Self {
            n,
            dirs: vec![[1.0, 0.0, 0.0]],
            weights: vec![sphere_area(n)],
        })
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }
}

pub(crate) fn check_angular(n: usize, angular: usize) -> Result<()> {
    match n {
        2 if angular < 2 || angular % 2 != 0 => Err(Error::InvalidConfig(format!(
            "angular resolution {angular} must be even and >= 2 for n = 2"
        ))),
        3 if angular < 4 || angular % 4 != 0 => Err(Error::InvalidConfig(format!(
            "angular resolution {angular} must be a multiple of 4 for n = 3"
        ))),
        _ => Ok(()),
    }
}

/// Deterministic sample directions: `count` equispaced angles for n = 2, a Fibonacci
/// lattice for n = 3, and {+1} for n = 1.
pub fn sample_directions(n: usize, count: usize) -> Vec<[f64; 3]> {
    match n {
        1 => vec![[1.0, 0.0, 0.0]],
        2 => (0..count)
            .map(|j| {
                let phi = 2.0 * PI * j as f64 / count as f64;
                [phi.cos(), phi.sin(), 0.0]
            })
            .collect(),
        _ => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|j| {
                    let z = 1.0 - 2.0 * (j as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * j as f64;
                    [r * phi.cos(), r * phi.sin(), z]
                })
                .collect()
        }
    }
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn geomspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == count {
                hi
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_areas() {
        assert_relative_eq!(sphere_area(1), 2.0, max_relative = 1e-14);
        assert_relative_eq!(sphere_area(2), 2.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(sphere_area(3), 4.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(ball_volume(3, 2.0), 32.0 * PI / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn rules_carry_sphere_measure() {
        for n in 1..=3 {
            for rule in [
                SphereRule::full(n, 16).unwrap(),
                SphereRule::hemisphere(n, 16).unwrap(),
                SphereRule::radial(n).unwrap(),
            ] {
                let sum: f64 = rule.weights.iter().sum();
                assert_relative_eq!(sum, sphere_area(n), max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn hemisphere_integrates_even_functions() {
        // int_{S^2} z^2 = 4 pi / 3
        let rule = SphereRule::hemisphere(3, 32).unwrap();
        let got: f64 = rule
            .dirs
            .iter()
            .zip(&rule.weights)
            .map(|(d, w)| w * d[2] * d[2])
            .sum();
        assert_relative_eq!(got, 4.0 * PI / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn angular_validation() {
        assert!(SphereRule::hemisphere(2, 3).is_err());
        assert!(SphereRule::hemisphere(3, 6).is_err());
        assert!(SphereRule::full(4, 8).is_err());
    }

    #[test]
    fn geomspace_endpoints() {
        let g = geomspace(0.1, 100.0, 24);
        assert_eq!(g.len(), 24);
        assert_eq!(g[0], 0.1);
        assert_eq!(g[23], 100.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
