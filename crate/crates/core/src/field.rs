//! Evaluable candidate functions on R^n together with the metadata the quadrature
//! needs: smoothness class, decay bound `|u(x)| <= C (1 + |x|)^{-beta}`, and an
//! optional support ball.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothness {
    Smooth,
    C2Local,
    Rough,
}

/// `|u(x)| <= constant * (1 + |x|)^{-beta}`. Negative `beta` describes growth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decay {
    pub beta: f64,
    pub constant: f64,
}

/// `u = 0` outside the closed ball `B_radius(center)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct ScalarField {
    n: usize,
    label: String,
    f: PointFn,
    smoothness: Smoothness,
    decay: Option<Decay>,
    support: Option<SupportBall>,
    radial: bool,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("label", &self.label)
            .field("n", &self.n)
            .field("smoothness", &self.smoothness)
            .field("decay", &self.decay)
            .field("support", &self.support)
            .field("radial", &self.radial)
            .finish()
    }
}

impl ScalarField {
    /// A smooth field with no decay or support metadata.
    pub fn new(
        n: usize,
        label: impl Into<String>,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            label: label.into(),
            f: Arc::new(f),
            smoothness: Smoothness::Smooth,
            decay: None,
            support: None,
            radial: false,
        }
    }

    pub fn with_smoothness(mut self, smoothness: Smoothness) -> Self {
        self.smoothness = smoothness;
        self
    }

    pub fn with_decay(mut self, beta: f64, constant: f64) -> Self {
        self.decay = Some(Decay { beta, constant });
        self
    }

    pub fn with_support(mut self, center: Vec<f64>, radius: f64) -> Self {
        self.support = Some(SupportBall { center, radius });
        self
    }

    /// Declares that u depends only on |x| (for n = 1: u is even).
    pub fn radial(mut self) -> Self {
        self.radial = true;
        self
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    /// Evaluation that reports non-finite values as a domain error.
    pub fn try_eval(&self, x: &[f64]) -> Result<f64> {
        let v = self.eval(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(x.to_vec()))
        }
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn decay(&self) -> Option<Decay> {
        self.decay
    }

    pub fn support(&self) -> Option<&SupportBall> {
        self.support.as_ref()
    }

    /// Radius of the smallest origin-centred ball containing the support.
    pub fn support_radius(&self) -> Option<f64> {
        self.support.as_ref().map(|b| norm(&b.center) + b.radius)
    }

    pub fn is_radial(&self) -> bool {
        self.radial
    }

    /// `x -> u(x - center)`.
    pub fn shifted(&self, center: &[f64]) -> Self {
        assert_eq!(center.len(), self.n, "shift dimension mismatch");
        let inner = Arc::clone(&self.f);
        let c = center.to_vec();
        let cc = c.clone();
        let mut out = Self::new(
            self.n,
            format!("{}(x - {:?})", self.label, c),
            move |x: &[f64]| {
                let mut y = [0.0; 3];
                for i in 0..x.len() {
                    y[i] = x[i] - cc[i];
                }
                inner(&y[..x.len()])
            },
        );
        out.smoothness = self.smoothness;
        out.support = self.support.as_ref().map(|b| SupportBall {
            center: b.center.iter().zip(&c).map(|(a, d)| a + d).collect(),
            radius: b.radius,
        });
        out.radial = self.radial && c.iter().all(|v| *v == 0.0);
        out
    }

    /// `x -> u(x / scale)`.
    pub fn dilated(&self, scale: f64) -> Self {
        assert!(scale > 0.0, "dilation scale must be positive");
        let inner = Arc::clone(&self.f);
        let mut out = Self::new(
            self.n,
            format!("{}(x / {scale})", self.label),
            move |x: &[f64]| {
                let mut y = [0.0; 3];
                for i in 0..x.len() {
                    y[i] = x[i] / scale;
                }
                inner(&y[..x.len()])
            },
        );
        out.smoothness = self.smoothness;
        out.radial = self.radial;
        out.support = self.support.as_ref().map(|b| SupportBall {
            center: b.center.iter().map(|v| v * scale).collect(),
            radius: b.radius * scale,
        });
        // (1 + |x|/R)^{-beta} <= R^beta (1 + |x|)^{-beta} for R >= 1, beta >= 0
        out.decay = self.decay.and_then(|d| {
            (scale >= 1.0 && d.beta >= 0.0).then(|| Decay {
                beta: d.beta,
                constant: d.constant * scale.powf(d.beta),
            })
        });
        out
    }

    /// `x -> u(x)^2`, keeping support and squaring the decay bound.
    pub fn squared(&self) -> Self {
        let inner = Arc::clone(&self.f);
        let mut out = Self::new(self.n, format!("{}^2", self.label), move |x: &[f64]| {
            let v = inner(x);
            v * v
        });
        out.smoothness = self.smoothness;
        out.radial = self.radial;
        out.support = self.support.clone();
        out.decay = self.decay.map(|d| Decay {
            beta: 2.0 * d.beta,
            constant: d.constant * d.constant,
        });
        out
    }
}

/// `u = value` everywhere.
pub fn constant(n: usize, value: f64) -> ScalarField {
    ScalarField::new(n, format!("constant({value})"), move |_| value)
        .with_decay(0.0, value.abs())
        .radial()
}

/// `u = cos(xi . x)`.
pub fn cosine(xi: Vec<f64>) -> ScalarField {
    let n = xi.len();
    let label = format!("cos({xi:?} . x)");
    let field = ScalarField::new(n, label, move |x: &[f64]| {
        xi.iter().zip(x).map(|(a, b)| a * b).sum::<f64>().cos()
    })
    .with_decay(0.0, 1.0);
    if n == 1 {
        field.radial()
    } else {
        field
    }
}

/// `u = (1 + |x|^2)^{-(n - 2s)/2}`; its operator image is a constant multiple of
/// `u^{(n+2s)/(n-2s)}` for the fractional kernel. Requires n > 2s.
pub fn bubble(n: usize, s: f64) -> Result<ScalarField> {
    let gamma = n as f64 - 2.0 * s;
    if gamma <= 0.0 {
        return Err(Error::ParameterDomain(format!(
            "bubble needs n > 2s, got n = {n}, s = {s}"
        )));
    }
    // (1 + |x|)^2 <= 2 (1 + |x|^2)
    Ok(
        ScalarField::new(n, format!("bubble(n={n}, s={s})"), move |x: &[f64]| {
            (1.0 + x.iter().map(|v| v * v).sum::<f64>()).powf(-0.5 * gamma)
        })
        .with_decay(gamma, 2f64.powf(0.5 * gamma))
        .radial(),
    )
}

/// `u = c (1 + |x|)^{-beta}`; Lipschitz kink at the origin, smooth elsewhere.
pub fn power_decay(n: usize, beta: f64, c: f64) -> ScalarField {
    ScalarField::new(n, format!("{c}(1+|x|)^(-{beta})"), move |x: &[f64]| {
        c * (1.0 + norm(x)).powf(-beta)
    })
    .with_decay(beta, c.abs())
    .with_smoothness(Smoothness::C2Local)
    .radial()
}

/// Named field constructors, as used by the configuration file and bindings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    Cosine {
        xi: Vec<f64>,
    },
    Bubble,
    Power {
        beta: f64,
        c: f64,
    },
    Bump {
        scale: f64,
        center: Option<Vec<f64>>,
    },
    Sharpness {
        q: f64,
        c: f64,
    },
}

impl FieldSpec {
    pub fn build(&self, n: usize, s: f64) -> Result<ScalarField> {
        match self {
            Self::Constant { value } => Ok(constant(n, *value)),
            Self::Cosine { xi } => {
                if xi.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: xi.len(),
                    });
                }
                Ok(cosine(xi.clone()))
            }
            Self::Bubble => bubble(n, s),
            Self::Power { beta, c } => Ok(power_decay(n, *beta, *c)),
            Self::Bump { scale, center } => {
                let b = crate::operator::make_bump(n)?.dilated(*scale);
                match center {
                    Some(c) if c.len() != n => Err(Error::DimensionMismatch {
                        expected: n,
                        got: c.len(),
                    }),
                    Some(c) => Ok(b.shifted(c)),
                    None => Ok(b),
                }
            }
            Self::Sharpness { q, c } => Ok(crate::sharpness::SharpnessProfile::new(n, s, *q, *c)?
                .field()
                .clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_moves_support_and_values() {
        let u = crate::operator::make_bump(1).unwrap();
        let v = u.shifted(&[10.0]);
        assert_eq!(v.eval(&[10.0]), 1.0);
        assert_eq!(v.eval(&[0.0]), 0.0);
        assert_eq!(v.support_radius(), Some(12.0));
        assert!(!v.is_radial());
    }

    #[test]
    fn dilation_scales_support_and_decay() {
        let u = power_decay(1, 2.0, 1.0).dilated(4.0);
        let d = u.decay().unwrap();
        assert_eq!(d.constant, 16.0);
        for x in [0.0, 1.0, 3.0, 100.0] {
            assert!(u.eval(&[x]) <= d.constant * (1.0 + x).powf(-d.beta) * (1.0 + 1e-14));
        }
    }

    #[test]
    fn bubble_decay_bound_holds() {
        let u = bubble(1, 0.25).unwrap();
        let d = u.decay().unwrap();
        for x in [0.0, 0.3, 1.0, 10.0, 1e4] {
            assert!(u.eval(&[x]) <= d.constant * (1.0 + x).powf(-d.beta));
        }
        assert!(bubble(1, 0.5).is_err());
    }

    #[test]
    fn non_finite_is_domain_error() {
        let u = ScalarField::new(1, "log", |x: &[f64]| x[0].ln());
        assert!(matches!(u.try_eval(&[-1.0]), Err(Error::Domain(_))));
        assert!(u.try_eval(&[1.0]).is_ok());
    }

    #[test]
    fn spec_parses_from_json() {
        let spec: FieldSpec =
            serde_json::from_str(r#"{"kind":"power","beta":2.0,"c":1.0}"#).unwrap();
        assert_eq!(spec, FieldSpec::Power { beta: 2.0, c: 1.0 });
        assert_eq!(spec.build(1, 0.25).unwrap().eval(&[1.0]), 0.25);
    }
}
