//! Asymptotic allocation variances and the Cramér–Rao lower bound.
//!
//! For a design that targets `v = rho(Theta)`, the allocation proportion
//! satisfies `sqrt(n) (N1/n - v) -> N(0, sigma^2)` with
//! `sigma^2 = grad' V grad`, where `V = diag(V1 / v, V2 / (1 - v))` and `V_k`
//! is the covariance of the per-patient sufficient statistic on arm `k`.
//! Bernoulli and Gaussian responses have `V_k = I_k^{-1}`, so ERADE attains the
//! lower bound exactly.

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::targets::{TargetAllocation, TargetParams};

/// Diagonal of the block-diagonal matrix `V`, in gradient coordinate order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VMatrix {
    pub diagonal: Vec<f64>,
}

impl VMatrix {
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.diagonal.len());
        self.diagonal.iter().zip(x).map(|(d, xi)| d * xi * xi).sum()
    }

    /// Block for one arm (1×1 for binary, 2×2 diagonal for Gaussian).
    pub fn block(&self, arm: usize) -> &[f64] {
        let half = self.diagonal.len() / 2;
        &self.diagonal[arm * half..(arm + 1) * half]
    }
}

fn check_v(v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::domain("v", v, "0 < v < 1"));
    }
    Ok(())
}

/// Per-arm covariance of the sufficient statistic: `P Q` for Bernoulli,
/// `diag(tau^2, 2 tau^4)` over `(xi, (xi - mu)^2)` for Gaussian.
fn response_covariance(params: &TargetParams) -> [Vec<f64>; 2] {
    match *params {
        TargetParams::Binary { p1, p2 } => [vec![p1 * (1.0 - p1)], vec![p2 * (1.0 - p2)]],
        TargetParams::Gaussian { tau1, tau2, .. } => {
            let (s1, s2) = (tau1 * tau1, tau2 * tau2);
            [vec![s1, 2.0 * s1 * s1], vec![s2, 2.0 * s2 * s2]]
        }
    }
}

/// Fisher information (diagonal) per arm: `1/(P Q)` or `diag(1/tau^2, 1/(2 tau^4))`.
pub fn fisher_information(params: &TargetParams) -> Result<[Vec<f64>; 2]> {
    params.validate()?;
    Ok(match *params {
        TargetParams::Binary { p1, p2 } => {
            [vec![1.0 / (p1 * (1.0 - p1))], vec![1.0 / (p2 * (1.0 - p2))]]
        }
        TargetParams::Gaussian { tau1, tau2, .. } => {
            let (s1, s2) = (tau1 * tau1, tau2 * tau2);
            [
                vec![1.0 / s1, 1.0 / (2.0 * s1 * s1)],
                vec![1.0 / s2, 1.0 / (2.0 * s2 * s2)],
            ]
        }
    })
}

pub fn v_matrix(params: &TargetParams, v: f64) -> Result<VMatrix> {
    params.validate()?;
    check_v(v)?;
    let [b1, b2] = response_covariance(params);
    let diagonal = b1
        .into_iter()
        .map(|x| x / v)
        .chain(b2.into_iter().map(|x| x / (1.0 - v)))
        .collect();
    Ok(VMatrix { diagonal })
}

/// `grad' V grad` at the true parameters.
pub fn sigma_general(target: &TargetAllocation, params: &TargetParams) -> Result<f64> {
    let v = target.evaluate(params)?;
    let grad = target.gradient(params)?;
    Ok(v_matrix(params, v)?.quadratic_form(&grad))
}

/// Lower bound `grad' diag((v I1)^-1, ((1-v) I2)^-1) grad`.
pub fn crlb(target: &TargetAllocation, params: &TargetParams) -> Result<f64> {
    let v = target.evaluate(params)?;
    let grad = target.gradient(params)?;
    let [i1, i2] = fisher_information(params)?;
    let inverse = i1
        .iter()
        .map(|i| 1.0 / (v * i))
        .chain(i2.iter().map(|i| 1.0 / ((1.0 - v) * i)));
    Ok(inverse.zip(&grad).map(|(w, g)| w * g * g).sum())
}

/// Closed-form variances for the six adaptive targets.
pub fn sigma_closed(target: &TargetAllocation, params: &TargetParams) -> Result<f64> {
    target.evaluate(params)?;
    let sigma = match (*target, *params) {
        (TargetAllocation::Urn, TargetParams::Binary { p1, p2 }) => {
            let (q1, q2) = (1.0 - p1, 1.0 - p2);
            q1 * q2 * (p1 + p2) / (2.0 - p1 - p2).powi(3)
        }
        (TargetAllocation::Rsihr, TargetParams::Binary { p1, p2 }) => {
            let (q1, q2) = (1.0 - p1, 1.0 - p2);
            let (a, b) = (p1.sqrt(), p2.sqrt());
            (q2 * p1.powf(1.5) + q1 * p2.powf(1.5)) / (4.0 * (p1 * p2).sqrt() * (a + b).powi(3))
        }
        (TargetAllocation::NeymanBinary, TargetParams::Binary { p1, p2 }) => {
            let (r1, r2) = (p1 * (1.0 - p1), p2 * (1.0 - p2));
            let (a, b) = (r1.sqrt(), r2.sqrt());
            (r1.powf(1.5) * (1.0 - 2.0 * p2).powi(2) + r2.powf(1.5) * (1.0 - 2.0 * p1).powi(2))
                / (4.0 * (r1 * r2).sqrt() * (a + b).powi(3))
        }
        (TargetAllocation::ZrGaussian, TargetParams::Gaussian { mu1, mu2, tau1, tau2 }) => {
            // variance-estimation part plus the contribution of the mean estimates
            let (a, b) = (tau1 * mu2.sqrt(), tau2 * mu1.sqrt());
            let variance_part = a * b / (2.0 * (a + b).powi(2));
            let mean_part = a * b * (tau1 * tau1 * b / (mu1 * mu1) + tau2 * tau2 * a / (mu2 * mu2))
                / (4.0 * (a + b).powi(3));
            variance_part + mean_part
        }
        (TargetAllocation::NeymanGaussian, TargetParams::Gaussian { tau1, tau2, .. }) => {
            tau1 * tau2 / (2.0 * (tau1 + tau2).powi(2))
        }
        (TargetAllocation::DaOptimal, TargetParams::Gaussian { tau1, tau2, .. }) => {
            let (a, b) = (tau1.powf(4.0 / 3.0), tau2.powf(4.0 / 3.0));
            8.0 * (tau1 * tau2).powf(4.0 / 3.0) / (9.0 * (a + b).powi(2))
        }
        (TargetAllocation::Fixed(_), _) => {
            return Err(Error::Unsupported {
                what: target.name(),
                reason: "closed forms exist only for the six adaptive targets",
            })
        }
        _ => unreachable!("evaluate checked the family"),
    };
    Ok(sigma)
}

/// Asymptotic allocation variance of the DBCD with tuning `gamma`:
/// `[v (1 - v) + 2 (1 + gamma) sigma_LB^2] / (1 + 2 gamma)`.
pub fn dbcd_variance(gamma: f64, target: &TargetAllocation, params: &TargetParams) -> Result<f64> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::domain("gamma", gamma, "gamma >= 0"));
    }
    let v = target.evaluate(params)?;
    let lower = sigma_general(target, params)?;
    Ok((v * (1.0 - v) + 2.0 * (1.0 + gamma) * lower) / (1.0 + 2.0 * gamma))
}

/// Standard normal CDF, `0.5 erfc(-x / sqrt 2)`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Power of the two-sided Wald test of `p1 = p2` with `n1`, `n2` patients,
/// neglecting the far tail: `Phi(|p1 - p2| / se - z_{level/2})`.
pub fn wald_power(p1: f64, p2: f64, n1: f64, n2: f64, level: f64) -> Result<f64> {
    for (name, p) in [("p1", p1), ("p2", p2)] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(name, p, "0 < p < 1"));
        }
    }
    for (name, n) in [("n1", n1), ("n2", n2)] {
        if n.is_nan() || n < 1.0 {
            return Err(Error::domain(name, n, "n >= 1"));
        }
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain("level", level, "0 < level < 1"));
    }
    let se = (p1 * (1.0 - p1) / n1 + p2 * (1.0 - p2) / n2).sqrt();
    let z = normal_quantile(1.0 - level / 2.0);
    Ok(normal_cdf((p1 - p2).abs() / se - z))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticSummary {
    pub v: f64,
    pub sigma_sq: f64,
    pub crlb: f64,
    /// Per-arm blocks of `V`.
    pub v_blocks: [Vec<f64>; 2],
}

impl AsymptoticSummary {
    pub fn compute(target: &TargetAllocation, params: &TargetParams) -> Result<Self> {
        let v = target.evaluate(params)?;
        let vm = v_matrix(params, v)?;
        Ok(Self {
            v,
            sigma_sq: sigma_general(target, params)?,
            crlb: crlb(target, params)?,
            v_blocks: [vm.block(0).to_vec(), vm.block(1).to_vec()],
        })
    }
}
