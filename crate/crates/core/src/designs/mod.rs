//! Randomization rules and the allocator that applies them to a trial.
//!
//! The probability functions ([`erade_probability`], [`efron_probability`],
//! [`dbcd_probability`]) are pure. [`Allocator`] carries the configured rule
//! plus any urn composition and turns a [`TrialState`] into the next
//! assignment, consuming a [`RandomStream`].

mod urn;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use urn::{dl_draw, dl_update, rpw_draw, rpw_update, DlEvent, UrnState};

use crate::error::{Error, Result};
use crate::estimators;
use crate::rng::RandomStream;
use crate::targets::{TargetAllocation, TargetParams};
use crate::trial::{Arm, Outcome, ResponseKind, TrialState};

/// Default ERADE randomization constant.
pub const DEFAULT_ALPHA: f64 = 0.5;
/// Default DBCD tuning constant.
pub const DEFAULT_GAMMA: f64 = 2.0;
/// Default burn-in size per arm.
pub const DEFAULT_M0: usize = 2;
/// Lower clamp applied to mean estimates inside the `zr-gaussian` target.
pub const ZR_MEAN_CLAMP: f64 = 1e-6;

/// Relative tolerance of the `N1 / m == rho` comparison.
const TIE_TOLERANCE: f64 = 1.0 / (1u64 << 44) as f64;

/// Which case of the allocation rule produced a probability.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    BurnIn,
    /// `N1/m > rho`: arm 1 is ahead of its target.
    OverRepresented,
    Tie,
    /// `N1/m < rho`: arm 1 lags its target.
    UnderRepresented,
    /// Continuous allocation function (DBCD).
    Smooth,
    /// Complete randomization.
    Fixed,
    Urn,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::domain("alpha", alpha, "0 <= alpha < 1"));
    }
    Ok(())
}

fn check_proportion(name: &'static str, rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::domain(name, rho, "0 < rho < 1"));
    }
    Ok(())
}

/// Position of `N1/m` relative to `rho`, with the tie tolerance.
pub fn erade_branch(rho: f64, n1: usize, m: usize) -> Branch {
    let gap = n1 as f64 - m as f64 * rho;
    if gap.abs() <= TIE_TOLERANCE * m as f64 {
        Branch::Tie
    } else if gap > 0.0 {
        Branch::OverRepresented
    } else {
        Branch::UnderRepresented
    }
}

/// ERADE probability of assigning the `(m+1)`-th patient to arm 1.
pub fn erade_probability(alpha: f64, rho: f64, n1: usize, m: usize) -> Result<f64> {
    check_alpha(alpha)?;
    check_proportion("rho", rho)?;
    if m == 0 {
        return Err(Error::domain("m", 0.0, "m >= 1"));
    }
    if n1 > m {
        return Err(Error::domain("N1", n1 as f64, "N1 <= m"));
    }
    Ok(erade_case(alpha, rho, erade_branch(rho, n1, m)))
}

fn erade_case(alpha: f64, rho: f64, branch: Branch) -> f64 {
    match branch {
        Branch::OverRepresented => alpha * rho,
        Branch::UnderRepresented => 1.0 - alpha * (1.0 - rho),
        _ => rho,
    }
}

/// Efron's biased coin: ERADE with the target fixed at 1/2.
pub fn efron_probability(alpha: f64, n1: usize, m: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if m == 0 {
        return Err(Error::domain("m", 0.0, "m >= 1"));
    }
    if n1 > m {
        return Err(Error::domain("N1", n1 as f64, "N1 <= m"));
    }
    Ok(match (2 * n1).cmp(&m) {
        std::cmp::Ordering::Greater => alpha / 2.0,
        std::cmp::Ordering::Equal => 0.5,
        std::cmp::Ordering::Less => 1.0 - alpha / 2.0,
    })
}

/// DBCD allocation function
/// `g(x, rho) = rho (rho/x)^g / [rho (rho/x)^g + (1-rho) ((1-rho)/(1-x))^g]`
/// with `g(0, .) = 1` and `g(1, .) = 0` for `gamma > 0`.
pub fn dbcd_probability(gamma: f64, rho: f64, x: f64) -> Result<f64> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::domain("gamma", gamma, "gamma >= 0"));
    }
    check_proportion("rho", rho)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain("x", x, "0 <= x <= 1"));
    }
    if gamma == 0.0 {
        return Ok(rho);
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x == 1.0 {
        return Ok(0.0);
    }
    let a = rho * (rho / x).powf(gamma);
    let b = (1.0 - rho) * ((1.0 - rho) / (1.0 - x)).powf(gamma);
    Ok(a / (a + b))
}

/// Randomization rule with its constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rule {
    Erade { alpha: f64 },
    Efron { alpha: f64 },
    Dbcd { gamma: f64 },
    DropTheLoser { urn: UrnState },
    Rpw { urn: UrnState },
    /// Play-the-winner after a burn-in of `m0` patients per arm whose
    /// responses seed the urn.
    ModifiedRpw { m0: usize, urn: UrnState },
    Complete { p: f64 },
}

impl Rule {
    pub fn is_urn(&self) -> bool {
        matches!(self, Rule::DropTheLoser { .. } | Rule::Rpw { .. } | Rule::ModifiedRpw { .. })
    }

    fn urn(&self) -> Option<UrnState> {
        match *self {
            Rule::DropTheLoser { urn } | Rule::Rpw { urn } | Rule::ModifiedRpw { urn, .. } => Some(urn),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Rule::Erade { alpha } | Rule::Efron { alpha } => check_alpha(alpha),
            Rule::Dbcd { gamma } => {
                if gamma >= 0.0 && gamma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::domain("gamma", gamma, "gamma >= 0"))
                }
            }
            Rule::DropTheLoser { urn } => {
                if urn.total() == 0 {
                    Err(Error::Config("drop-the-loser urn needs at least one ball".into()))
                } else {
                    Ok(())
                }
            }
            Rule::Rpw { urn } => {
                if urn.immigration != 0 {
                    Err(Error::Config("play-the-winner urns have no immigration ball".into()))
                } else if urn.treatment_balls() == 0 {
                    Err(Error::Config("play-the-winner urn needs at least one ball".into()))
                } else {
                    Ok(())
                }
            }
            // the burn-in responses add 2 * m0 balls before the first draw
            Rule::ModifiedRpw { m0, urn } => {
                if m0 == 0 {
                    Err(Error::Config("m0 must be at least 1".into()))
                } else if urn.immigration != 0 {
                    Err(Error::Config("play-the-winner urns have no immigration ball".into()))
                } else {
                    Ok(())
                }
            }
            Rule::Complete { p } => {
                if (0.0..=1.0).contains(&p) {
                    Ok(())
                } else {
                    Err(Error::domain("p", p, "0 <= p <= 1"))
                }
            }
        }
    }

    fn swapped(&self) -> Rule {
        match *self {
            Rule::DropTheLoser { urn } => Rule::DropTheLoser { urn: urn.swapped() },
            Rule::Rpw { urn } => Rule::Rpw { urn: urn.swapped() },
            Rule::ModifiedRpw { m0, urn } => Rule::ModifiedRpw { m0, urn: urn.swapped() },
            Rule::Complete { p } => Rule::Complete { p: 1.0 - p },
            other => other,
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Rule::Erade { alpha } => write!(f, "erade:{alpha}"),
            Rule::Efron { alpha } => write!(f, "efron:{alpha}"),
            Rule::Dbcd { gamma } => write!(f, "dbcd:{gamma}"),
            Rule::DropTheLoser { urn } => {
                write!(f, "dl:{},{},{}", urn.balls[0], urn.balls[1], urn.immigration)
            }
            Rule::Rpw { urn } => write!(f, "rpw:{},{}", urn.balls[0], urn.balls[1]),
            Rule::ModifiedRpw { m0, urn } => {
                write!(f, "mrpw:{},{},{}", m0, urn.balls[0], urn.balls[1])
            }
            Rule::Complete { p } => write!(f, "cr:{p}"),
        }
    }
}

impl FromStr for Rule {
    type Err = Error;

    /// Accepts `erade:<alpha>`, `efron:<alpha>`, `dbcd:<gamma>`,
    /// `dl:<b1,b2,b0>`, `rpw:<b1,b2>`, `mrpw:<m0,b1,b2>` and `cr:<p>`.
    /// The argument may be omitted to take the default.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((name, arg)) => (name, Some(arg)),
            None => (s, None),
        };
        let real = |default: f64| -> Result<f64> {
            arg.map_or(Ok(default), |a| a.trim().parse().map_err(|e| Error::parse("design", s, e)))
        };
        let counts = |default: &[u64]| -> Result<Vec<u64>> {
            let Some(a) = arg else { return Ok(default.to_vec()) };
            let v = a
                .split(',')
                .map(|x| x.trim().parse::<u64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse("design", s, e))?;
            if v.len() != default.len() {
                return Err(Error::parse("design", s, format!("expected {} counts", default.len())));
            }
            Ok(v)
        };
        let rule = match name {
            "erade" => Rule::Erade { alpha: real(DEFAULT_ALPHA)? },
            "efron" => Rule::Efron { alpha: real(2.0 / 3.0)? },
            "dbcd" => Rule::Dbcd { gamma: real(DEFAULT_GAMMA)? },
            "dl" => {
                let c = counts(&[5, 5, 1])?;
                Rule::DropTheLoser { urn: UrnState::new(c[0], c[1], c[2]) }
            }
            "rpw" => {
                let c = counts(&[1, 1])?;
                Rule::Rpw { urn: UrnState::new(c[0], c[1], 0) }
            }
            "mrpw" => {
                let c = counts(&[DEFAULT_M0 as u64, 1, 1])?;
                Rule::ModifiedRpw { m0: c[0] as usize, urn: UrnState::new(c[1], c[2], 0) }
            }
            "cr" => Rule::Complete { p: real(0.5)? },
            _ => return Err(Error::parse("design", s, "unknown rule")),
        };
        rule.validate()?;
        Ok(rule)
    }
}

impl Serialize for Rule {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rule {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub rule: Rule,
    pub target: TargetAllocation,
    /// Burn-in patients per arm for ERADE and DBCD.
    #[serde(default = "default_m0")]
    pub m0: usize,
    /// `Theta_0`, used while Gaussian estimates are undefined.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_guess: Option<TargetParams>,
}

fn default_m0() -> usize {
    DEFAULT_M0
}

impl DesignConfig {
    pub fn new(rule: Rule, target: TargetAllocation) -> Self {
        let target = match rule {
            Rule::Efron { .. } => TargetAllocation::Fixed(0.5),
            r if r.is_urn() => TargetAllocation::Urn,
            _ => target,
        };
        Self {
            rule,
            target,
            m0: DEFAULT_M0,
            initial_guess: None,
        }
    }

    pub fn erade(alpha: f64, target: TargetAllocation) -> Self {
        Self::new(Rule::Erade { alpha }, target)
    }

    pub fn dbcd(gamma: f64, target: TargetAllocation) -> Self {
        Self::new(Rule::Dbcd { gamma }, target)
    }

    pub fn efron(alpha: f64) -> Self {
        Self::new(Rule::Efron { alpha }, TargetAllocation::Fixed(0.5))
    }

    pub fn drop_the_loser(arm1: u64, arm2: u64, immigration: u64) -> Self {
        Self::new(
            Rule::DropTheLoser { urn: UrnState::new(arm1, arm2, immigration) },
            TargetAllocation::Urn,
        )
    }

    pub fn rpw(arm1: u64, arm2: u64) -> Self {
        Self::new(Rule::Rpw { urn: UrnState::new(arm1, arm2, 0) }, TargetAllocation::Urn)
    }

    pub fn modified_rpw(m0: usize, arm1: u64, arm2: u64) -> Self {
        Self::new(
            Rule::ModifiedRpw { m0, urn: UrnState::new(arm1, arm2, 0) },
            TargetAllocation::Urn,
        )
    }

    pub fn complete(p: f64) -> Self {
        Self::new(Rule::Complete { p }, TargetAllocation::Fixed(0.5))
    }

    pub fn with_m0(mut self, m0: usize) -> Self {
        self.m0 = m0;
        self
    }

    pub fn with_initial_guess(mut self, guess: TargetParams) -> Self {
        self.initial_guess = Some(guess);
        self
    }

    /// Burn-in patients per arm assigned by the permuted block.
    pub fn burn_in_per_arm(&self) -> usize {
        match self.rule {
            Rule::Erade { .. } | Rule::Dbcd { .. } => self.m0,
            Rule::ModifiedRpw { m0, .. } => m0,
            _ => 0,
        }
    }

    /// Checks the configuration against the trial's response family.
    pub fn validate(&self, kind: ResponseKind) -> Result<()> {
        self.rule.validate()?;
        if matches!(self.rule, Rule::Erade { .. } | Rule::Dbcd { .. }) && self.m0 == 0 {
            return Err(Error::Config("m0 must be at least 1".into()));
        }
        if self.rule.is_urn() && kind != ResponseKind::Binary {
            return Err(Error::Config(format!("{} needs binary responses", self.rule)));
        }
        if self.rule.is_urn() && self.target != TargetAllocation::Urn {
            return Err(Error::Config(format!("{} targets the urn allocation", self.rule)));
        }
        if matches!(self.rule, Rule::Efron { .. }) && self.target != TargetAllocation::Fixed(0.5) {
            return Err(Error::Config("Efron's coin targets fixed:0.5".into()));
        }
        if let Some(family) = self.target.family() {
            if family != kind {
                return Err(Error::Config(format!(
                    "target {} needs {} responses",
                    self.target,
                    family.name()
                )));
            }
        }
        if let Some(guess) = &self.initial_guess {
            guess.validate()?;
            if guess.kind() != kind {
                return Err(Error::Config("initial guess family differs from responses".into()));
            }
        }
        Ok(())
    }

    /// Configuration with the arm labels exchanged.
    pub fn swapped(&self) -> Self {
        let target = match self.target {
            TargetAllocation::Fixed(rho) => TargetAllocation::Fixed(1.0 - rho),
            t => t,
        };
        Self {
            rule: self.rule.swapped(),
            target,
            m0: self.m0,
            initial_guess: self.initial_guess.map(|g| g.swapped()),
        }
    }
}

impl fmt::Display for DesignConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} target={}", self.rule, self.target)
    }
}

/// Estimated target proportion at the current state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoHat {
    pub value: f64,
    /// Evaluated at the initial guess rather than data.
    pub from_initial_guess: bool,
    /// A mean estimate was clamped to keep the `zr-gaussian` target real.
    pub mean_clamped: bool,
}

/// Probability of arm 1 for the next patient, before drawing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub probability: f64,
    pub branch: Branch,
}

/// A completed assignment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub arm: Arm,
    pub probability: f64,
    pub branch: Branch,
    /// Uniforms consumed, including drop-the-loser immigration draws.
    pub draws: u64,
    pub immigrations: u64,
}

/// Applies a [`DesignConfig`] to a trial, one patient at a time.
#[derive(Clone, Debug, PartialEq)]
pub struct Allocator {
    config: DesignConfig,
    urn: Option<UrnState>,
}

impl Allocator {
    pub fn new(config: DesignConfig, kind: ResponseKind) -> Result<Self> {
        config.validate(kind)?;
        Ok(Self {
            urn: config.rule.urn(),
            config,
        })
    }

    pub fn config(&self) -> &DesignConfig {
        &self.config
    }

    /// Current urn composition, for urn rules.
    pub fn urn(&self) -> Option<UrnState> {
        self.urn
    }

    /// `rho(Theta_hat)` from responded patients.
    pub fn rho_hat(&self, state: &TrialState) -> Result<RhoHat> {
        let est = estimators::estimate(state, self.config.initial_guess.as_ref())?;
        let mut params = est.params;
        let mut mean_clamped = false;
        if let (TargetAllocation::ZrGaussian, TargetParams::Gaussian { mu1, mu2, .. }) =
            (self.config.target, &mut params)
        {
            for mu in [mu1, mu2] {
                if *mu < ZR_MEAN_CLAMP {
                    *mu = ZR_MEAN_CLAMP;
                    mean_clamped = true;
                }
            }
        }
        Ok(RhoHat {
            value: self.config.target.evaluate(&params)?,
            from_initial_guess: est.from_initial_guess,
            mean_clamped,
        })
    }

    fn in_burn_in(&self, state: &TrialState) -> bool {
        state.n() < 2 * self.config.burn_in_per_arm()
    }

    /// Permuted block realised sequentially: arm 1 with probability
    /// (arm-1 slots left) / (slots left).
    fn burn_in_probability(&self, state: &TrialState) -> f64 {
        let m0 = self.config.burn_in_per_arm();
        let left1 = m0.saturating_sub(state.assigned(Arm::One));
        let left2 = m0.saturating_sub(state.assigned(Arm::Two));
        if left1 + left2 == 0 {
            0.5
        } else {
            left1 as f64 / (left1 + left2) as f64
        }
    }

    /// Probability that the next patient goes to arm 1.
    pub fn decide(&self, state: &TrialState) -> Result<Decision> {
        if self.in_burn_in(state) {
            return Ok(Decision {
                probability: self.burn_in_probability(state),
                branch: Branch::BurnIn,
            });
        }
        let m = state.n();
        let n1 = state.assigned(Arm::One);
        let decision = match self.config.rule {
            Rule::Erade { alpha } => {
                let rho = self.rho_hat(state)?.value;
                let branch = erade_branch(rho, n1, m);
                Decision {
                    probability: erade_case(alpha, rho, branch),
                    branch,
                }
            }
            Rule::Efron { alpha } => {
                if m == 0 {
                    Decision { probability: 0.5, branch: Branch::Tie }
                } else {
                    Decision {
                        probability: efron_probability(alpha, n1, m)?,
                        branch: erade_branch(0.5, n1, m),
                    }
                }
            }
            Rule::Dbcd { gamma } => {
                let rho = self.rho_hat(state)?.value;
                Decision {
                    probability: dbcd_probability(gamma, rho, n1 as f64 / m as f64)?,
                    branch: Branch::Smooth,
                }
            }
            Rule::Complete { p } => Decision { probability: p, branch: Branch::Fixed },
            Rule::DropTheLoser { .. } | Rule::Rpw { .. } | Rule::ModifiedRpw { .. } => {
                let urn = self.urn.expect("urn rules carry an urn");
                Decision {
                    probability: urn.arm_one_share().unwrap_or(0.5),
                    branch: Branch::Urn,
                }
            }
        };
        Ok(decision)
    }

    /// Chooses the next patient's arm. The trial state is not modified; the
    /// caller applies the assignment.
    pub fn assign(&mut self, state: &TrialState, stream: &mut RandomStream) -> Result<Assignment> {
        let start = stream.position();
        let urn_phase = self.config.rule.is_urn() && !self.in_burn_in(state);
        if !urn_phase {
            let d = self.decide(state)?;
            let arm = if stream.bernoulli(d.probability) { Arm::One } else { Arm::Two };
            return Ok(Assignment {
                arm,
                probability: d.probability,
                branch: d.branch,
                draws: stream.position() - start,
                immigrations: 0,
            });
        }
        let mut urn = self.urn.expect("urn rules carry an urn");
        let (arm, probability, immigrations) = match self.config.rule {
            Rule::DropTheLoser { .. } => {
                let mut immigrations = 0;
                loop {
                    let share = urn.arm_one_share();
                    let (event, next) = dl_draw(&urn, stream)?;
                    urn = next;
                    match event {
                        DlEvent::Immigration => immigrations += 1,
                        DlEvent::Assignment(arm) => {
                            break (arm, share.expect("a treatment ball was drawn"), immigrations);
                        }
                    }
                }
            }
            _ => {
                let share = urn
                    .arm_one_share()
                    .ok_or_else(|| Error::Config("play-the-winner urn is empty".into()))?;
                (rpw_draw(&urn, stream)?, share, 0)
            }
        };
        self.urn = Some(urn);
        Ok(Assignment {
            arm,
            probability,
            branch: Branch::Urn,
            draws: stream.position() - start,
            immigrations,
        })
    }

    /// Feeds a response back into the urn, if any.
    pub fn observe(&mut self, arm: Arm, outcome: &Outcome) {
        let Some(urn) = self.urn else { return };
        let success = match outcome {
            Outcome::Binary(s) => *s,
            Outcome::Continuous(_) => return,
        };
        self.urn = Some(match self.config.rule {
            Rule::DropTheLoser { .. } => dl_update(&urn, arm, success),
            _ => rpw_update(&urn, arm, success),
        });
    }
}
