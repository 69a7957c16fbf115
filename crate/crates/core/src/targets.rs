//! Target allocation proportions `rho(Theta)` and their gradients.
//!
//! Binary targets are functions of `(P1, P2)`. Gaussian targets are functions
//! of `(mu1, tau1, mu2, tau2)`, but their gradients are taken over
//! `(mu1, tau1^2, mu2, tau2^2)`: the variance coordinates match the second
//! sufficient statistic `(xi - mu)^2` whose covariance enters the allocation
//! variance.
//!
//! | name              | proportion                                   |
//! |-------------------|----------------------------------------------|
//! | `urn`             | `Q2 / (Q1 + Q2)`                             |
//! | `rsihr`           | `sqrt(P1) / (sqrt(P1) + sqrt(P2))`           |
//! | `neyman-binary`   | `sqrt(P1 Q1) / (sqrt(P1 Q1) + sqrt(P2 Q2))`  |
//! | `zr-gaussian`     | `tau1 sqrt(mu2) / (tau1 sqrt(mu2) + tau2 sqrt(mu1))` |
//! | `neyman-gaussian` | `tau1 / (tau1 + tau2)`                       |
//! | `da-optimal`      | `tau1^(4/3) / (tau1^(4/3) + tau2^(4/3))`     |
//! | `fixed:<rho>`     | constant                                     |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trial::ResponseKind;

/// Strict margin for open-domain checks.
pub const DOMAIN_MARGIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum TargetParams {
    Binary { p1: f64, p2: f64 },
    Gaussian { mu1: f64, mu2: f64, tau1: f64, tau2: f64 },
}

impl TargetParams {
    pub fn kind(&self) -> ResponseKind {
        match self {
            TargetParams::Binary { .. } => ResponseKind::Binary,
            TargetParams::Gaussian { .. } => ResponseKind::Continuous,
        }
    }

    /// Exchanges the roles of the two arms.
    pub fn swapped(&self) -> Self {
        match *self {
            TargetParams::Binary { p1, p2 } => TargetParams::Binary { p1: p2, p2: p1 },
            TargetParams::Gaussian { mu1, mu2, tau1, tau2 } => TargetParams::Gaussian {
                mu1: mu2,
                mu2: mu1,
                tau1: tau2,
                tau2: tau1,
            },
        }
    }

    /// Gradient dimension: 2 for binary, 4 for Gaussian.
    pub fn dim(&self) -> usize {
        match self {
            TargetParams::Binary { .. } => 2,
            TargetParams::Gaussian { .. } => 4,
        }
    }

    /// Coordinates in gradient order: `(P1, P2)` or `(mu1, tau1^2, mu2, tau2^2)`.
    pub fn coordinates(&self) -> Vec<f64> {
        match *self {
            TargetParams::Binary { p1, p2 } => vec![p1, p2],
            TargetParams::Gaussian { mu1, mu2, tau1, tau2 } => {
                vec![mu1, tau1 * tau1, mu2, tau2 * tau2]
            }
        }
    }

    /// Inverse of [`coordinates`](Self::coordinates).
    pub fn from_coordinates(kind: ResponseKind, c: &[f64]) -> Self {
        match kind {
            ResponseKind::Binary => TargetParams::Binary { p1: c[0], p2: c[1] },
            ResponseKind::Continuous => TargetParams::Gaussian {
                mu1: c[0],
                tau1: c[1].sqrt(),
                mu2: c[2],
                tau2: c[3].sqrt(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TargetParams::Binary { p1, p2 } => {
                for (name, p) in [("P1", p1), ("P2", p2)] {
                    if !(p > DOMAIN_MARGIN && p < 1.0 - DOMAIN_MARGIN) {
                        return Err(Error::domain(name, p, "0 < P < 1"));
                    }
                }
            }
            TargetParams::Gaussian { mu1, mu2, tau1, tau2 } => {
                for (name, mu) in [("mu1", mu1), ("mu2", mu2)] {
                    if !mu.is_finite() {
                        return Err(Error::domain(name, mu, "finite mean"));
                    }
                }
                for (name, tau) in [("tau1", tau1), ("tau2", tau2)] {
                    if !(tau > DOMAIN_MARGIN && tau.is_finite()) {
                        return Err(Error::domain(name, tau, "tau > 0"));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TargetAllocation {
    Urn,
    Rsihr,
    NeymanBinary,
    ZrGaussian,
    NeymanGaussian,
    DaOptimal,
    Fixed(f64),
}

impl TargetAllocation {
    pub const ALL_ADAPTIVE: [TargetAllocation; 6] = [
        TargetAllocation::Urn,
        TargetAllocation::Rsihr,
        TargetAllocation::NeymanBinary,
        TargetAllocation::ZrGaussian,
        TargetAllocation::NeymanGaussian,
        TargetAllocation::DaOptimal,
    ];

    pub fn fixed(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::domain("fixed target", rho, "0 < rho < 1"));
        }
        Ok(TargetAllocation::Fixed(rho))
    }

    /// Response family the target is defined on; `None` for fixed targets.
    pub fn family(&self) -> Option<ResponseKind> {
        match self {
            TargetAllocation::Urn | TargetAllocation::Rsihr | TargetAllocation::NeymanBinary => {
                Some(ResponseKind::Binary)
            }
            TargetAllocation::ZrGaussian
            | TargetAllocation::NeymanGaussian
            | TargetAllocation::DaOptimal => Some(ResponseKind::Continuous),
            TargetAllocation::Fixed(_) => None,
        }
    }

    pub fn name(&self) -> String {
        match self {
            TargetAllocation::Urn => "urn".into(),
            TargetAllocation::Rsihr => "rsihr".into(),
            TargetAllocation::NeymanBinary => "neyman-binary".into(),
            TargetAllocation::ZrGaussian => "zr-gaussian".into(),
            TargetAllocation::NeymanGaussian => "neyman-gaussian".into(),
            TargetAllocation::DaOptimal => "da-optimal".into(),
            TargetAllocation::Fixed(rho) => format!("fixed:{rho}"),
        }
    }

    fn check(&self, params: &TargetParams) -> Result<()> {
        params.validate()?;
        if let Some(family) = self.family() {
            if family != params.kind() {
                return Err(Error::VariantMismatch {
                    expected: family.name(),
                });
            }
        }
        if let (TargetAllocation::ZrGaussian, TargetParams::Gaussian { mu1, mu2, .. }) = (self, params) {
            for (name, mu) in [("mu1", *mu1), ("mu2", *mu2)] {
                if mu <= DOMAIN_MARGIN {
                    return Err(Error::domain(name, mu, "mu > 0 for zr-gaussian"));
                }
            }
        }
        Ok(())
    }

    /// `rho(Theta)`, strictly inside `(0, 1)` on the open domain.
    pub fn evaluate(&self, params: &TargetParams) -> Result<f64> {
        self.check(params)?;
        let rho = match (*self, *params) {
            (TargetAllocation::Fixed(rho), _) => rho,
            (TargetAllocation::Urn, TargetParams::Binary { p1, p2 }) => {
                let (q1, q2) = (1.0 - p1, 1.0 - p2);
                q2 / (q1 + q2)
            }
            (TargetAllocation::Rsihr, TargetParams::Binary { p1, p2 }) => {
                ratio(p1.sqrt(), p2.sqrt())
            }
            (TargetAllocation::NeymanBinary, TargetParams::Binary { p1, p2 }) => {
                ratio((p1 * (1.0 - p1)).sqrt(), (p2 * (1.0 - p2)).sqrt())
            }
            (TargetAllocation::ZrGaussian, TargetParams::Gaussian { mu1, mu2, tau1, tau2 }) => {
                ratio(tau1 * mu2.sqrt(), tau2 * mu1.sqrt())
            }
            (TargetAllocation::NeymanGaussian, TargetParams::Gaussian { tau1, tau2, .. }) => {
                ratio(tau1, tau2)
            }
            (TargetAllocation::DaOptimal, TargetParams::Gaussian { tau1, tau2, .. }) => {
                ratio(tau1.powf(4.0 / 3.0), tau2.powf(4.0 / 3.0))
            }
            _ => unreachable!("family checked above"),
        };
        Ok(rho)
    }

    /// Analytic `d rho / d y` over [`TargetParams::coordinates`].
    pub fn gradient(&self, params: &TargetParams) -> Result<Vec<f64>> {
        self.check(params)?;
        let grad = match (*self, *params) {
            (TargetAllocation::Fixed(_), p) => vec![0.0; p.dim()],
            (TargetAllocation::Urn, TargetParams::Binary { p1, p2 }) => {
                let (q1, q2) = (1.0 - p1, 1.0 - p2);
                let d = (q1 + q2) * (q1 + q2);
                vec![q2 / d, -q1 / d]
            }
            (TargetAllocation::Rsihr, TargetParams::Binary { p1, p2 }) => {
                let (a, b) = (p1.sqrt(), p2.sqrt());
                let s2 = (a + b) * (a + b);
                vec![b / (2.0 * a * s2), -a / (2.0 * b * s2)]
            }
            (TargetAllocation::NeymanBinary, TargetParams::Binary { p1, p2 }) => {
                let (a, b) = ((p1 * (1.0 - p1)).sqrt(), (p2 * (1.0 - p2)).sqrt());
                let s2 = (a + b) * (a + b);
                vec![
                    b * (1.0 - 2.0 * p1) / (2.0 * a * s2),
                    -a * (1.0 - 2.0 * p2) / (2.0 * b * s2),
                ]
            }
            (TargetAllocation::ZrGaussian, TargetParams::Gaussian { mu1, mu2, tau1, tau2 }) => {
                // rho = A / (A + B), A = tau1 sqrt(mu2), B = tau2 sqrt(mu1)
                let (a, b) = (tau1 * mu2.sqrt(), tau2 * mu1.sqrt());
                let c = a * b / (2.0 * (a + b) * (a + b));
                let (s1, s2) = (tau1 * tau1, tau2 * tau2);
                vec![-c / mu1, c / s1, c / mu2, -c / s2]
            }
            (TargetAllocation::NeymanGaussian, TargetParams::Gaussian { tau1, tau2, .. }) => {
                // d tau / d s = 1 / (2 tau)
                let c = tau1 * tau2 / (2.0 * (tau1 + tau2) * (tau1 + tau2));
                vec![0.0, c / (tau1 * tau1), 0.0, -c / (tau2 * tau2)]
            }
            (TargetAllocation::DaOptimal, TargetParams::Gaussian { tau1, tau2, .. }) => {
                // a = s1^(2/3), d a / d s1 = (2/3) a / s1
                let (a, b) = (tau1.powf(4.0 / 3.0), tau2.powf(4.0 / 3.0));
                let c = 2.0 * a * b / (3.0 * (a + b) * (a + b));
                vec![0.0, c / (tau1 * tau1), 0.0, -c / (tau2 * tau2)]
            }
            _ => unreachable!("family checked above"),
        };
        Ok(grad)
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    a / (a + b)
}

impl fmt::Display for TargetAllocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for TargetAllocation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let target = match s {
            "urn" => TargetAllocation::Urn,
            "rsihr" => TargetAllocation::Rsihr,
            "neyman-binary" => TargetAllocation::NeymanBinary,
            "zr-gaussian" => TargetAllocation::ZrGaussian,
            "neyman-gaussian" => TargetAllocation::NeymanGaussian,
            "da-optimal" => TargetAllocation::DaOptimal,
            _ => {
                let Some(rho) = s.strip_prefix("fixed:") else {
                    return Err(Error::parse("target", s, "unknown target name"));
                };
                let rho: f64 = rho.parse().map_err(|e| Error::parse("target", s, e))?;
                TargetAllocation::fixed(rho)?
            }
        };
        Ok(target)
    }
}

impl Serialize for TargetAllocation {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for TargetAllocation {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
