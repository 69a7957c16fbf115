//! Parameter estimates that feed the target allocation.
//!
//! Binary trials use the shrunk proportion `(successes + 0.5) / (responded + 1)`,
//! which is well defined before any response arrives. Gaussian trials use the
//! maximum-likelihood mean and variance (divisor `N`), with the variance
//! floored so that targets dividing by `tau` stay finite.
//!
//! Only patients with a recorded outcome enter the estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::targets::TargetParams;
use crate::trial::{Arm, ResponseKind, TrialState};

/// Prior success probability used by the shrunk binary estimator.
pub const BINARY_PRIOR: f64 = 0.5;

/// `(sum + prior) / (count + 1)`.
pub fn shrunk_mean(sum: f64, count: usize, prior: f64) -> f64 {
    (sum + prior) / (count as f64 + 1.0)
}

/// Smallest variance estimate handed to the targets: `1e-8 * max(1, mu^2)`.
pub fn variance_floor(mu: f64) -> f64 {
    1e-8 * (mu * mu).max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryEstimates {
    pub p1: f64,
    pub p2: f64,
}

impl BinaryEstimates {
    pub fn params(&self) -> TargetParams {
        TargetParams::Binary {
            p1: self.p1,
            p2: self.p2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianEstimates {
    pub mu1: f64,
    pub mu2: f64,
    /// Variance estimates `tau^2`, already floored.
    pub var1: f64,
    pub var2: f64,
}

impl GaussianEstimates {
    pub fn params(&self) -> TargetParams {
        TargetParams::Gaussian {
            mu1: self.mu1,
            mu2: self.mu2,
            tau1: self.var1.sqrt(),
            tau2: self.var2.sqrt(),
        }
    }
}

pub fn binary_estimates(state: &TrialState) -> Result<BinaryEstimates> {
    if state.kind() != ResponseKind::Binary {
        return Err(Error::VariantMismatch { expected: "binary" });
    }
    let p = |arm| shrunk_mean(state.sum(arm), state.responded(arm), BINARY_PRIOR);
    Ok(BinaryEstimates {
        p1: p(Arm::One),
        p2: p(Arm::Two),
    })
}

/// Maximum-likelihood estimates; `Ok(None)` until both arms have a response.
pub fn gaussian_estimates(state: &TrialState) -> Result<Option<GaussianEstimates>> {
    if state.kind() != ResponseKind::Continuous {
        return Err(Error::VariantMismatch {
            expected: "continuous",
        });
    }
    if state.responded(Arm::One) == 0 || state.responded(Arm::Two) == 0 {
        return Ok(None);
    }
    let arm_estimate = |arm| {
        let count = state.responded(arm) as f64;
        let mu = state.sum(arm) / count;
        let raw = state.sumsq(arm) / count - mu * mu;
        (mu, raw.max(variance_floor(mu)))
    };
    let (mu1, var1) = arm_estimate(Arm::One);
    let (mu2, var2) = arm_estimate(Arm::Two);
    Ok(Some(GaussianEstimates { mu1, mu2, var1, var2 }))
}

/// Point at which a design evaluates its target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterEstimate {
    pub params: TargetParams,
    /// True while the initial guess stands in for the data (Gaussian burn-in).
    pub from_initial_guess: bool,
}

/// Estimates for the trial's response family, falling back to
/// `initial_guess` while Gaussian estimates are undefined.
pub fn estimate(state: &TrialState, initial_guess: Option<&TargetParams>) -> Result<ParameterEstimate> {
    match state.kind() {
        ResponseKind::Binary => Ok(ParameterEstimate {
            params: binary_estimates(state)?.params(),
            from_initial_guess: false,
        }),
        ResponseKind::Continuous => match gaussian_estimates(state)? {
            Some(est) => Ok(ParameterEstimate {
                params: est.params(),
                from_initial_guess: false,
            }),
            None => Ok(ParameterEstimate {
                params: initial_guess
                    .copied()
                    .unwrap_or_else(|| default_initial_guess(ResponseKind::Continuous)),
                from_initial_guess: true,
            }),
        },
    }
}

pub fn default_initial_guess(kind: ResponseKind) -> TargetParams {
    match kind {
        ResponseKind::Binary => TargetParams::Binary {
            p1: BINARY_PRIOR,
            p2: BINARY_PRIOR,
        },
        ResponseKind::Continuous => TargetParams::Gaussian {
            mu1: 0.0,
            mu2: 0.0,
            tau1: 1.0,
            tau2: 1.0,
        },
    }
}
