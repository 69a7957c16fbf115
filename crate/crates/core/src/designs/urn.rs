//! Drop-the-loser and randomized play-the-winner urns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::trial::Arm;

/// Ball counts. `immigration` is only used by the drop-the-loser rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrnState {
    pub balls: [u64; 2],
    pub immigration: u64,
}

impl UrnState {
    pub fn new(arm1: u64, arm2: u64, immigration: u64) -> Self {
        Self {
            balls: [arm1, arm2],
            immigration,
        }
    }

    pub fn treatment_balls(&self) -> u64 {
        self.balls[0] + self.balls[1]
    }

    pub fn total(&self) -> u64 {
        self.treatment_balls() + self.immigration
    }

    /// Chance that the next treatment ball drawn is of type 1.
    pub fn arm_one_share(&self) -> Option<f64> {
        let t = self.treatment_balls();
        (t > 0).then(|| self.balls[0] as f64 / t as f64)
    }

    pub fn swapped(&self) -> Self {
        Self::new(self.balls[1], self.balls[0], self.immigration)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DlEvent {
    Immigration,
    Assignment(Arm),
}

/// One drop-the-loser draw. An immigration ball is replaced and adds one
/// ball of each treatment type; a treatment ball is withheld until the
/// patient's response arrives.
pub fn dl_draw(urn: &UrnState, stream: &mut RandomStream) -> Result<(DlEvent, UrnState)> {
    let total = urn.total();
    if total == 0 {
        return Err(Error::Config("drop-the-loser urn is empty".into()));
    }
    let ball = stream.index(total);
    let mut next = *urn;
    let event = if ball < urn.balls[0] {
        next.balls[0] -= 1;
        DlEvent::Assignment(Arm::One)
    } else if ball < urn.treatment_balls() {
        next.balls[1] -= 1;
        DlEvent::Assignment(Arm::Two)
    } else {
        next.balls[0] += 1;
        next.balls[1] += 1;
        DlEvent::Immigration
    };
    Ok((event, next))
}

/// Returns the withheld ball on success; a failure leaves it dropped.
pub fn dl_update(urn: &UrnState, arm: Arm, success: bool) -> UrnState {
    let mut next = *urn;
    if success {
        next.balls[arm.idx()] += 1;
    }
    next
}

/// Play-the-winner draw, with replacement.
pub fn rpw_draw(urn: &UrnState, stream: &mut RandomStream) -> Result<Arm> {
    let total = urn.treatment_balls();
    if total == 0 {
        return Err(Error::Config("play-the-winner urn is empty".into()));
    }
    Ok(if stream.index(total) < urn.balls[0] {
        Arm::One
    } else {
        Arm::Two
    })
}

/// Success adds a ball of the assigned type, failure one of the other type.
pub fn rpw_update(urn: &UrnState, arm: Arm, success: bool) -> UrnState {
    let mut next = *urn;
    let rewarded = if success { arm } else { arm.other() };
    next.balls[rewarded.idx()] += 1;
    next
}
