//! Arms, outcomes, response models and the sequential trial record.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::targets::TargetParams;

/// One of the two treatments. `Arm::One` is "treatment 1" in every formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Arm {
    One,
    Two,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::One, Arm::Two];

    /// Zero-based slot for per-arm arrays.
    pub fn idx(self) -> usize {
        match self {
            Arm::One => 0,
            Arm::Two => 1,
        }
    }

    pub fn number(self) -> u8 {
        self.idx() as u8 + 1
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::One => Arm::Two,
            Arm::Two => Arm::One,
        }
    }
}

impl From<Arm> for u8 {
    fn from(arm: Arm) -> u8 {
        arm.number()
    }
}

impl TryFrom<u8> for Arm {
    type Error = Error;

    fn try_from(value: u8) -> Result<Arm> {
        match value {
            1 => Ok(Arm::One),
            2 => Ok(Arm::Two),
            other => Err(Error::parse("arm", &other.to_string(), "expected 1 or 2")),
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseKind {
    Binary,
    Continuous,
}

impl ResponseKind {
    pub fn name(self) -> &'static str {
        match self {
            ResponseKind::Binary => "binary",
            ResponseKind::Continuous => "continuous",
        }
    }
}

impl fmt::Display for ResponseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ResponseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(ResponseKind::Binary),
            "continuous" | "gaussian" => Ok(ResponseKind::Continuous),
            _ => Err(Error::parse("response kind", s, "expected binary or continuous")),
        }
    }
}

/// A single patient response.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Binary(bool),
    Continuous(f64),
}

impl Outcome {
    pub fn kind(&self) -> ResponseKind {
        match self {
            Outcome::Binary(_) => ResponseKind::Binary,
            Outcome::Continuous(_) => ResponseKind::Continuous,
        }
    }

    /// The sufficient statistic: success indicator or the raw value.
    pub fn value(&self) -> f64 {
        match *self {
            Outcome::Binary(success) => f64::from(u8::from(success)),
            Outcome::Continuous(x) => x,
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, Outcome::Binary(false))
    }
}

/// True response distributions for simulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ResponseModel {
    Bernoulli { p1: f64, p2: f64 },
    Gaussian { mu1: f64, mu2: f64, tau1: f64, tau2: f64 },
}

impl ResponseModel {
    pub fn bernoulli(p1: f64, p2: f64) -> Result<Self> {
        let model = ResponseModel::Bernoulli { p1, p2 };
        model.validate()?;
        Ok(model)
    }

    pub fn gaussian(mu1: f64, mu2: f64, tau1: f64, tau2: f64) -> Result<Self> {
        let model = ResponseModel::Gaussian { mu1, mu2, tau1, tau2 };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ResponseModel::Bernoulli { p1, p2 } => {
                for (name, p) in [("P1", p1), ("P2", p2)] {
                    if !(p > 0.0 && p < 1.0) {
                        return Err(Error::domain(name, p, "0 < P < 1"));
                    }
                }
            }
            ResponseModel::Gaussian { mu1, mu2, tau1, tau2 } => {
                for (name, mu) in [("mu1", mu1), ("mu2", mu2)] {
                    if !mu.is_finite() {
                        return Err(Error::domain(name, mu, "finite mean"));
                    }
                }
                for (name, tau) in [("tau1", tau1), ("tau2", tau2)] {
                    if !(tau > 0.0 && tau.is_finite()) {
                        return Err(Error::domain(name, tau, "tau > 0"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> ResponseKind {
        match self {
            ResponseModel::Bernoulli { .. } => ResponseKind::Binary,
            ResponseModel::Gaussian { .. } => ResponseKind::Continuous,
        }
    }

    /// The true parameter point Θ, in the form the targets consume.
    pub fn params(&self) -> TargetParams {
        match *self {
            ResponseModel::Bernoulli { p1, p2 } => TargetParams::Binary { p1, p2 },
            ResponseModel::Gaussian { mu1, mu2, tau1, tau2 } => {
                TargetParams::Gaussian { mu1, mu2, tau1, tau2 }
            }
        }
    }

    /// Draws one response for `arm`. Bernoulli consumes one uniform,
    /// Gaussian two.
    pub fn sample(&self, arm: Arm, stream: &mut RandomStream) -> Outcome {
        match *self {
            ResponseModel::Bernoulli { p1, p2 } => {
                let p = if arm == Arm::One { p1 } else { p2 };
                Outcome::Binary(stream.bernoulli(p))
            }
            ResponseModel::Gaussian { mu1, mu2, tau1, tau2 } => {
                let (mu, tau) = if arm == Arm::One { (mu1, tau1) } else { (mu2, tau2) };
                Outcome::Continuous(mu + tau * stream.standard_normal())
            }
        }
    }
}

pub fn sample_response(model: &ResponseModel, arm: Arm, stream: &mut RandomStream) -> Outcome {
    model.sample(arm, stream)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub arm: Arm,
    pub outcome: Option<Outcome>,
}

/// Sequential record of assignments and responses with per-arm sufficient
/// statistics. Patients are numbered from 1 in assignment order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialState {
    kind: ResponseKind,
    assigned: [usize; 2],
    responded: [usize; 2],
    sum: [f64; 2],
    sumsq: [f64; 2],
    patients: Vec<PatientRecord>,
}

impl TrialState {
    pub fn new(model: &ResponseModel) -> Result<Self> {
        model.validate()?;
        Ok(Self::with_kind(model.kind()))
    }

    pub fn with_kind(kind: ResponseKind) -> Self {
        Self {
            kind,
            assigned: [0; 2],
            responded: [0; 2],
            sum: [0.0; 2],
            sumsq: [0.0; 2],
            patients: Vec::new(),
        }
    }

    pub fn kind(&self) -> ResponseKind {
        self.kind
    }

    /// Number of assigned patients.
    pub fn n(&self) -> usize {
        self.patients.len()
    }

    /// `N_k`: patients assigned to `arm`.
    pub fn assigned(&self, arm: Arm) -> usize {
        self.assigned[arm.idx()]
    }

    /// Patients on `arm` whose outcome has been recorded.
    pub fn responded(&self, arm: Arm) -> usize {
        self.responded[arm.idx()]
    }

    /// Sum of responses on `arm` (success count for binary trials).
    pub fn sum(&self, arm: Arm) -> f64 {
        self.sum[arm.idx()]
    }

    pub fn sumsq(&self, arm: Arm) -> f64 {
        self.sumsq[arm.idx()]
    }

    /// Binary failures among responded patients, both arms.
    pub fn failures(&self) -> usize {
        match self.kind {
            ResponseKind::Binary => Arm::BOTH
                .iter()
                .map(|&a| self.responded(a) - self.sum(a) as usize)
                .sum(),
            ResponseKind::Continuous => 0,
        }
    }

    pub fn patients(&self) -> &[PatientRecord] {
        &self.patients
    }

    pub fn patient(&self, index: usize) -> Option<&PatientRecord> {
        index.checked_sub(1).and_then(|i| self.patients.get(i))
    }

    pub fn pending(&self) -> impl Iterator<Item = usize> + '_ {
        self.patients
            .iter()
            .enumerate()
            .filter(|(_, p)| p.outcome.is_none())
            .map(|(i, _)| i + 1)
    }

    /// Assigns the next patient; returns the patient's 1-based index.
    pub fn apply_assignment(&mut self, arm: Arm) -> usize {
        self.patients.push(PatientRecord { arm, outcome: None });
        self.assigned[arm.idx()] += 1;
        self.patients.len()
    }

    /// Records the outcome of an assigned patient; returns the patient's arm.
    pub fn apply_outcome(&mut self, patient: usize, outcome: Outcome) -> Result<Arm> {
        if outcome.kind() != self.kind {
            return Err(Error::VariantMismatch {
                expected: self.kind.name(),
            });
        }
        if let Outcome::Continuous(x) = outcome {
            if !x.is_finite() {
                return Err(Error::domain("response", x, "finite value"));
            }
        }
        let record = patient
            .checked_sub(1)
            .and_then(|i| self.patients.get_mut(i))
            .ok_or(Error::UnknownPatient(patient))?;
        if record.outcome.is_some() {
            return Err(Error::DuplicateOutcome(patient));
        }
        record.outcome = Some(outcome);
        let arm = record.arm;
        let k = arm.idx();
        let x = outcome.value();
        self.responded[k] += 1;
        self.sum[k] += x;
        if self.kind == ResponseKind::Continuous {
            self.sumsq[k] += x * x;
        }
        Ok(arm)
    }

    /// Checks the bookkeeping invariants against the patient log.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let mut assigned = [0usize; 2];
        let mut responded = [0usize; 2];
        for p in &self.patients {
            assigned[p.arm.idx()] += 1;
            if let Some(o) = p.outcome {
                if o.kind() != self.kind {
                    return Err("outcome variant differs from trial variant".into());
                }
                responded[p.arm.idx()] += 1;
            }
        }
        if assigned != self.assigned {
            return Err(format!("counts {:?} != log {:?}", self.assigned, assigned));
        }
        if responded != self.responded {
            return Err(format!("responded {:?} != log {:?}", self.responded, responded));
        }
        if self.assigned[0] + self.assigned[1] != self.n() {
            return Err("N1 + N2 != n".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_trial_is_empty() {
        let s = TrialState::new(&ResponseModel::bernoulli(0.9, 0.7).unwrap()).unwrap();
        assert_eq!((s.n(), s.assigned(Arm::One), s.assigned(Arm::Two)), (0, 0, 0));
        let g = TrialState::new(&ResponseModel::gaussian(0.0, 0.0, 1.0, 1.0).unwrap()).unwrap();
        assert_eq!(g.n(), 0);
        assert!(g.patients().is_empty());
    }

    #[test]
    fn boundary_parameters_rejected() {
        assert!(matches!(
            ResponseModel::bernoulli(1.0, 0.5),
            Err(Error::Domain { name: "P1", .. })
        ));
        assert!(ResponseModel::bernoulli(0.5, 0.0).is_err());
        assert!(ResponseModel::gaussian(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(ResponseModel::gaussian(0.0, 0.0, 1.0, -2.0).is_err());
    }

    #[test]
    fn assignment_counters() {
        let mut s = TrialState::with_kind(ResponseKind::Binary);
        assert_eq!(s.apply_assignment(Arm::One), 1);
        assert_eq!((s.n(), s.assigned(Arm::One), s.assigned(Arm::Two)), (1, 1, 0));

        let mut s = TrialState::with_kind(ResponseKind::Binary);
        for arm in [Arm::One, Arm::Two, Arm::One, Arm::Two, Arm::One] {
            s.apply_assignment(arm);
        }
        s.apply_assignment(Arm::Two);
        assert_eq!((s.n(), s.assigned(Arm::One), s.assigned(Arm::Two)), (6, 3, 3));
        let before = s.assigned(Arm::One);
        s.apply_assignment(Arm::One);
        s.apply_assignment(Arm::One);
        assert_eq!(s.assigned(Arm::One), before + 2);
        s.check_invariants().unwrap();
    }

    #[test]
    fn outcome_updates_sums() {
        let mut s = TrialState::with_kind(ResponseKind::Binary);
        let p1 = s.apply_assignment(Arm::One);
        let p2 = s.apply_assignment(Arm::Two);
        s.apply_outcome(p1, Outcome::Binary(true)).unwrap();
        assert_eq!(s.sum(Arm::One), 1.0);
        s.apply_outcome(p2, Outcome::Binary(false)).unwrap();
        assert_eq!(s.sum(Arm::Two), 0.0);
        assert_eq!(s.failures(), 1);
        assert_eq!(s.apply_outcome(p1, Outcome::Binary(true)), Err(Error::DuplicateOutcome(1)));
        assert_eq!(s.apply_outcome(9, Outcome::Binary(true)), Err(Error::UnknownPatient(9)));
        assert_eq!(s.apply_outcome(0, Outcome::Binary(true)), Err(Error::UnknownPatient(0)));
        s.check_invariants().unwrap();
    }

    #[test]
    fn variant_mismatch() {
        let mut s = TrialState::with_kind(ResponseKind::Continuous);
        let p = s.apply_assignment(Arm::Two);
        assert!(matches!(
            s.apply_outcome(p, Outcome::Binary(true)),
            Err(Error::VariantMismatch { .. })
        ));
        s.apply_outcome(p, Outcome::Continuous(3.0)).unwrap();
        assert_eq!((s.sum(Arm::Two), s.sumsq(Arm::Two)), (3.0, 9.0));
        assert_eq!(s.pending().count(), 0);
    }

    #[test]
    fn pending_outcomes_do_not_count_as_responses() {
        let mut s = TrialState::with_kind(ResponseKind::Binary);
        s.apply_assignment(Arm::One);
        s.apply_assignment(Arm::One);
        s.apply_outcome(2, Outcome::Binary(true)).unwrap();
        assert_eq!(s.assigned(Arm::One), 2);
        assert_eq!(s.responded(Arm::One), 1);
        assert_eq!(s.pending().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn degenerate_bernoulli_always_succeeds() {
        let eps = 1e-9;
        let model = ResponseModel::bernoulli(1.0 - eps, 0.5).unwrap();
        let mut stream = RandomStream::new(3, 0);
        let successes = (0..10_000)
            .filter(|_| model.sample(Arm::One, &mut stream) == Outcome::Binary(true))
            .count();
        assert_eq!(successes, 10_000);
    }

    #[test]
    fn gaussian_sample_mean_within_clt_band() {
        let model = ResponseModel::gaussian(0.0, 5.0, 1.0, 2.0).unwrap();
        let mut stream = RandomStream::new(17, 2);
        let n = 100_000;
        let mean = (0..n).map(|_| model.sample(Arm::One, &mut stream).value()).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4e-2 * 10f64.sqrt(), "mean {mean}");
        assert_eq!(stream.position(), 2 * n as u64);
    }

    #[test]
    fn sampling_is_deterministic() {
        let model = ResponseModel::gaussian(1.0, 2.0, 1.0, 1.0).unwrap();
        let a = model.sample(Arm::Two, &mut RandomStream::at_position(5, 9, 40));
        let b = model.sample(Arm::Two, &mut RandomStream::at_position(5, 9, 40));
        assert_eq!(a, b);
    }

    #[test]
    fn outcome_json_shape() {
        let json = serde_json::to_string(&Outcome::Binary(true)).unwrap();
        assert_eq!(json, r#"{"binary":true}"#);
        let back: Outcome = serde_json::from_str(r#"{"continuous":1.5}"#).unwrap();
        assert_eq!(back, Outcome::Continuous(1.5));
        assert_eq!(serde_json::to_string(&Arm::Two).unwrap(), "2");
    }
}
