//! In-memory trial state rebuilt from, and verified against, the journal.

use std::collections::HashMap;

use chrono::{DateTime, Utc};
use erade_core::estimators;
use erade_core::{
    Allocator, Arm, Branch, DesignConfig, Outcome, RandomStream, ResponseKind, TargetParams, TrialState,
    UrnState,
};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::journal::{Assigned, Created, EventBody, OutcomeRecorded, TrialEvent};
use crate::schema;

/// Body of `POST /trials`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateTrial {
    pub design: DesignConfig,
    pub response: ResponseKind,
    pub max_n: usize,
    /// Seed of the trial's random stream; drawn from the trial id if absent.
    #[serde(default)]
    pub master_seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Enrolling,
    Completed,
}

/// One point of the allocation chart: after `m` patients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub m: usize,
    pub n1: usize,
    pub proportion: f64,
    pub rho_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub schema: String,
    pub trial_id: String,
    pub status: TrialStatus,
    pub design: DesignConfig,
    pub design_label: String,
    pub response: ResponseKind,
    pub max_n: usize,
    pub master_seed: u64,
    pub created: DateTime<Utc>,
    pub last_seq: u64,
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
    pub responded: [usize; 2],
    pub pending: Vec<usize>,
    pub estimates: TargetParams,
    pub estimates_from_initial_guess: bool,
    pub rho_hat: f64,
    /// Probability that the next patient goes to arm 1; absent once completed.
    pub next_probability: Option<f64>,
    pub next_branch: Option<Branch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub urn: Option<UrnState>,
    pub stream_position: u64,
    pub history: Vec<HistoryPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnrollResponse {
    pub schema: String,
    pub trial_id: String,
    pub seq: u64,
    pub patient: usize,
    pub arm: Arm,
    pub probability_used: f64,
    pub branch: Branch,
    pub stream_position: u64,
    /// True when an earlier request with the same idempotency key is replayed.
    pub repeated: bool,
}

/// What the next enrollment would use if the given outcomes were recorded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preview {
    pub schema: String,
    pub trial_id: String,
    pub rho_hat: f64,
    pub next_probability: f64,
    pub next_branch: Branch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypotheticalOutcome {
    pub patient: usize,
    pub outcome: Outcome,
}

#[derive(Clone, Debug)]
pub struct TrialRecord {
    trial_id: String,
    created: DateTime<Utc>,
    spec: Created,
    state: TrialState,
    allocator: Allocator,
    stream: RandomStream,
    events: Vec<TrialEvent>,
    history: Vec<HistoryPoint>,
    enroll_keys: HashMap<String, usize>,
    outcome_keys: HashMap<String, usize>,
}

impl TrialRecord {
    /// Builds the `created` event for a new trial after validating it.
    pub fn plan_create(
        trial_id: &str,
        request: &CreateTrial,
        master_seed: u64,
        idempotency_key: Option<String>,
        now: DateTime<Utc>,
    ) -> Result<TrialEvent, ServiceError> {
        let created = Created {
            design: request.design,
            response: request.response,
            max_n: request.max_n,
            master_seed,
            stream_index: 0,
            idempotency_key,
        };
        check_created(&created)?;
        Ok(TrialEvent::new(1, trial_id, EventBody::Created(created), now))
    }

    /// Rebuilds a trial from its journal, verifying every event.
    pub fn replay(events: &[TrialEvent]) -> Result<Self, ServiceError> {
        let first = events
            .first()
            .ok_or_else(|| ServiceError::corruption("?", 1, "empty journal"))?;
        let EventBody::Created(created) = &first.body else {
            return Err(ServiceError::corruption(&first.trial_id, first.seq, "first event is not `created`"));
        };
        if first.seq != 1 {
            return Err(ServiceError::corruption(&first.trial_id, 1, "missing seq 1"));
        }
        check_created(created).map_err(|e| ServiceError::corruption(&first.trial_id, 1, e.to_string()))?;
        let mut record = Self {
            trial_id: first.trial_id.clone(),
            created: first.ts,
            spec: created.clone(),
            state: TrialState::with_kind(created.response),
            allocator: Allocator::new(created.design, created.response)?,
            stream: RandomStream::new(created.master_seed, created.stream_index),
            events: vec![first.clone()],
            history: Vec::new(),
            enroll_keys: HashMap::new(),
            outcome_keys: HashMap::new(),
        };
        for event in &events[1..] {
            record.apply(event.clone())?;
        }
        Ok(record)
    }

    pub fn trial_id(&self) -> &str {
        &self.trial_id
    }

    pub fn last_seq(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq)
    }

    pub fn state(&self) -> &TrialState {
        &self.state
    }

    pub fn events(&self) -> &[TrialEvent] {
        &self.events
    }

    pub fn created_event(&self) -> &Created {
        &self.spec
    }

    pub fn status(&self) -> TrialStatus {
        if self.state.n() >= self.spec.max_n {
            TrialStatus::Completed
        } else {
            TrialStatus::Enrolling
        }
    }

    /// Patient index enrolled under `key`, if any.
    pub fn enrollment_for_key(&self, key: &str) -> Option<EnrollResponse> {
        let patient = *self.enroll_keys.get(key)?;
        self.events.iter().find_map(|e| match &e.body {
            EventBody::Assigned(a) if a.patient == patient => Some(self.enroll_response(e.seq, a, true)),
            _ => None,
        })
    }

    pub fn outcome_key_seen(&self, key: &str) -> bool {
        self.outcome_keys.contains_key(key)
    }

    fn enroll_response(&self, seq: u64, a: &Assigned, repeated: bool) -> EnrollResponse {
        EnrollResponse {
            schema: schema::ENROLLMENT.to_string(),
            trial_id: self.trial_id.clone(),
            seq,
            patient: a.patient,
            arm: a.arm,
            probability_used: a.probability_used,
            branch: a.branch,
            stream_position: a.stream_position,
            repeated,
        }
    }

    /// Assignment the next patient receives from the current state.
    fn next_assignment(&self, idempotency_key: Option<String>) -> Result<(Assigned, Allocator, RandomStream), ServiceError> {
        let mut allocator = self.allocator.clone();
        let mut stream = self.stream.clone();
        let position = stream.position();
        let a = allocator.assign(&self.state, &mut stream)?;
        let assigned = Assigned {
            patient: self.state.n() + 1,
            arm: a.arm,
            probability_used: a.probability,
            branch: a.branch,
            stream_position: position,
            draws: a.draws,
            urn: allocator.urn(),
            idempotency_key,
        };
        Ok((assigned, allocator, stream))
    }

    pub fn plan_enroll(&self, idempotency_key: Option<String>, now: DateTime<Utc>) -> Result<TrialEvent, ServiceError> {
        if self.status() == TrialStatus::Completed {
            return Err(ServiceError::Completed {
                trial_id: self.trial_id.clone(),
                max_n: self.spec.max_n,
            });
        }
        let (assigned, _, _) = self.next_assignment(idempotency_key)?;
        Ok(TrialEvent::new(self.last_seq() + 1, &self.trial_id, EventBody::Assigned(assigned), now))
    }

    pub fn plan_outcome(
        &self,
        patient: usize,
        outcome: Outcome,
        idempotency_key: Option<String>,
        now: DateTime<Utc>,
    ) -> Result<TrialEvent, ServiceError> {
        let mut state = self.state.clone();
        let arm = state.apply_outcome(patient, outcome)?;
        let mut allocator = self.allocator.clone();
        allocator.observe(arm, &outcome);
        let body = EventBody::Outcome(OutcomeRecorded {
            patient,
            outcome,
            urn: allocator.urn(),
            idempotency_key,
        });
        Ok(TrialEvent::new(self.last_seq() + 1, &self.trial_id, body, now))
    }

    /// Applies the next event after recomputing what it must contain.
    pub fn apply(&mut self, event: TrialEvent) -> Result<(), ServiceError> {
        let expected = self.last_seq() + 1;
        let id = self.trial_id.clone();
        let bad = |reason: String| ServiceError::corruption(&id, expected, reason);
        if event.seq != expected {
            return Err(bad(format!("missing seq {expected} (found seq {})", event.seq)));
        }
        if event.trial_id != self.trial_id {
            return Err(bad(format!("event belongs to trial {}", event.trial_id)));
        }
        match &event.body {
            EventBody::Created(_) => return Err(bad("duplicate `created` event".into())),
            EventBody::Assigned(recorded) => {
                if self.status() == TrialStatus::Completed {
                    return Err(bad("assignment beyond max_n".into()));
                }
                if recorded.stream_position != self.stream.position() {
                    return Err(bad(format!(
                        "stream position {} but the prefix has consumed {}",
                        recorded.stream_position,
                        self.stream.position()
                    )));
                }
                let (mut computed, allocator, stream) =
                    self.next_assignment(recorded.idempotency_key.clone()).map_err(|e| bad(e.to_string()))?;
                computed.idempotency_key = recorded.idempotency_key.clone();
                if computed.probability_used.to_bits() != recorded.probability_used.to_bits() {
                    return Err(bad(format!(
                        "probability_used {} differs from the recomputed {}",
                        recorded.probability_used, computed.probability_used
                    )));
                }
                if &computed != recorded {
                    return Err(bad(format!("assignment differs from recomputation: {computed:?}")));
                }
                let patient = self.state.apply_assignment(computed.arm);
                self.allocator = allocator;
                self.stream = stream;
                if let Some(key) = &recorded.idempotency_key {
                    self.enroll_keys.insert(key.clone(), patient);
                }
                let rho = self.current_rho_hat();
                self.history.push(HistoryPoint {
                    m: patient,
                    n1: self.state.assigned(Arm::One),
                    proportion: self.state.assigned(Arm::One) as f64 / patient as f64,
                    rho_hat: rho,
                });
            }
            EventBody::Outcome(recorded) => {
                let arm = self
                    .state
                    .apply_outcome(recorded.patient, recorded.outcome)
                    .map_err(|e| bad(e.to_string()))?;
                self.allocator.observe(arm, &recorded.outcome);
                if self.allocator.urn() != recorded.urn {
                    return Err(bad(format!(
                        "urn {:?} differs from the recomputed {:?}",
                        recorded.urn,
                        self.allocator.urn()
                    )));
                }
                if let Some(key) = &recorded.idempotency_key {
                    self.outcome_keys.insert(key.clone(), recorded.patient);
                }
                let rho = self.current_rho_hat();
                if let Some(last) = self.history.last_mut() {
                    last.rho_hat = rho;
                }
            }
        }
        self.events.push(event);
        Ok(())
    }

    fn current_rho_hat(&self) -> f64 {
        self.allocator.rho_hat(&self.state).map_or(f64::NAN, |r| r.value)
    }

    /// Response for the enrollment recorded by `event`.
    pub fn enroll_response_for(&self, event: &TrialEvent) -> Option<EnrollResponse> {
        match &event.body {
            EventBody::Assigned(a) => Some(self.enroll_response(event.seq, a, false)),
            _ => None,
        }
    }

    pub fn snapshot(&self) -> Result<Snapshot, ServiceError> {
        let est = estimators::estimate(&self.state, self.spec.design.initial_guess.as_ref())?;
        let rho = self.allocator.rho_hat(&self.state)?;
        let next = match self.status() {
            TrialStatus::Enrolling => Some(self.allocator.decide(&self.state)?),
            TrialStatus::Completed => None,
        };
        Ok(Snapshot {
            schema: schema::SNAPSHOT.to_string(),
            trial_id: self.trial_id.clone(),
            status: self.status(),
            design: self.spec.design,
            design_label: self.spec.design.to_string(),
            response: self.spec.response,
            max_n: self.spec.max_n,
            master_seed: self.spec.master_seed,
            created: self.created,
            last_seq: self.last_seq(),
            n: self.state.n(),
            n1: self.state.assigned(Arm::One),
            n2: self.state.assigned(Arm::Two),
            responded: [self.state.responded(Arm::One), self.state.responded(Arm::Two)],
            pending: self.state.pending().collect(),
            estimates: est.params,
            estimates_from_initial_guess: est.from_initial_guess,
            rho_hat: rho.value,
            next_probability: next.map(|d| d.probability),
            next_branch: next.map(|d| d.branch),
            urn: self.allocator.urn(),
            stream_position: self.stream.position(),
            history: self.history.clone(),
        })
    }

    /// Next-enrollment probability after hypothetical outcomes; nothing is
    /// recorded.
    pub fn preview(&self, outcomes: &[HypotheticalOutcome]) -> Result<Preview, ServiceError> {
        let mut state = self.state.clone();
        let mut allocator = self.allocator.clone();
        for h in outcomes {
            let arm = state.apply_outcome(h.patient, h.outcome)?;
            allocator.observe(arm, &h.outcome);
        }
        let decision = allocator.decide(&state)?;
        Ok(Preview {
            schema: schema::PREVIEW.to_string(),
            trial_id: self.trial_id.clone(),
            rho_hat: allocator.rho_hat(&state)?.value,
            next_probability: decision.probability,
            next_branch: decision.branch,
        })
    }
}

fn check_created(created: &Created) -> Result<(), ServiceError> {
    created.design.validate(created.response)?;
    let burn_in = 2 * created.design.burn_in_per_arm();
    if created.max_n == 0 || created.max_n < burn_in {
        return Err(ServiceError::BadRequest(format!(
            "max_n must be at least {} for this design, got {}",
            burn_in.max(1),
            created.max_n
        )));
    }
    Ok(())
}
