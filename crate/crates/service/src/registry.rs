//! Trials by id. Reads share a lock; mutations of one trial are serialized
//! by that trial's mutex, and each is journaled before it is applied.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::Utc;
use erade_core::Outcome;
use parking_lot::{Mutex, RwLock};

use crate::error::ServiceError;
use crate::journal::{journal_files, Journal, TrialEvent};
use crate::record::{CreateTrial, EnrollResponse, HypotheticalOutcome, Preview, Snapshot, TrialRecord};

struct Entry {
    record: TrialRecord,
    journal: Journal,
}

pub struct TrialService {
    dir: PathBuf,
    trials: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
    /// Idempotency key of `POST /trials` to trial id.
    create_keys: Mutex<HashMap<String, String>>,
}

impl TrialService {
    /// Opens `dir`, replaying every journal in it. A journal that fails
    /// verification aborts startup.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        let mut trials = HashMap::new();
        let mut create_keys = HashMap::new();
        for path in journal_files(&dir)? {
            let (journal, events) = Journal::open(&path)?;
            let record = TrialRecord::replay(&events)?;
            if let Some(key) = &record.created_event().idempotency_key {
                create_keys.insert(key.clone(), record.trial_id().to_string());
            }
            log::info!("replayed trial {} ({} events)", record.trial_id(), events.len());
            trials.insert(record.trial_id().to_string(), Arc::new(Mutex::new(Entry { record, journal })));
        }
        Ok(Self {
            dir,
            trials: RwLock::new(trials),
            create_keys: Mutex::new(create_keys),
        })
    }

    pub fn journal_dir(&self) -> &Path {
        &self.dir
    }

    pub fn trial_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.trials.read().keys().cloned().collect();
        ids.sort();
        ids
    }

    fn entry(&self, trial_id: &str) -> Result<Arc<Mutex<Entry>>, ServiceError> {
        self.trials
            .read()
            .get(trial_id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownTrial(trial_id.to_string()))
    }

    /// Creates a trial. Returns the snapshot and whether a new trial was made.
    pub fn create(&self, request: &CreateTrial, idempotency_key: Option<String>) -> Result<(Snapshot, bool), ServiceError> {
        let mut keys = self.create_keys.lock();
        if let Some(id) = idempotency_key.as_ref().and_then(|k| keys.get(k)) {
            return Ok((self.snapshot(id)?, false));
        }
        let uuid = uuid::Uuid::new_v4();
        let trial_id = uuid.simple().to_string();
        let master_seed = request.master_seed.unwrap_or(uuid.as_u64_pair().0);
        let event = TrialRecord::plan_create(&trial_id, request, master_seed, idempotency_key.clone(), Utc::now())?;
        let mut journal = Journal::create(&self.dir, &trial_id)?;
        if let Err(e) = journal.append(&event) {
            let _ = std::fs::remove_file(journal.path());
            return Err(e);
        }
        let record = TrialRecord::replay(std::slice::from_ref(&event))?;
        let snapshot = record.snapshot()?;
        self.trials
            .write()
            .insert(trial_id.clone(), Arc::new(Mutex::new(Entry { record, journal })));
        if let Some(key) = idempotency_key {
            keys.insert(key, trial_id);
        }
        Ok((snapshot, true))
    }

    pub fn snapshot(&self, trial_id: &str) -> Result<Snapshot, ServiceError> {
        self.entry(trial_id)?.lock().record.snapshot()
    }

    pub fn enroll(&self, trial_id: &str, idempotency_key: Option<String>) -> Result<EnrollResponse, ServiceError> {
        let entry = self.entry(trial_id)?;
        let mut guard = entry.lock();
        let Entry { record, journal } = &mut *guard;
        if let Some(previous) = idempotency_key.as_deref().and_then(|k| record.enrollment_for_key(k)) {
            return Ok(previous);
        }
        let event = record.plan_enroll(idempotency_key, Utc::now())?;
        journal.append(&event)?;
        let response = record.enroll_response_for(&event).expect("assigned event");
        record.apply(event)?;
        Ok(response)
    }

    pub fn record_outcome(
        &self,
        trial_id: &str,
        patient: usize,
        outcome: Outcome,
        idempotency_key: Option<String>,
    ) -> Result<Snapshot, ServiceError> {
        let entry = self.entry(trial_id)?;
        let mut guard = entry.lock();
        let Entry { record, journal } = &mut *guard;
        if idempotency_key.as_deref().is_some_and(|k| record.outcome_key_seen(k)) {
            return record.snapshot();
        }
        let event = record.plan_outcome(patient, outcome, idempotency_key, Utc::now())?;
        journal.append(&event)?;
        record.apply(event)?;
        record.snapshot()
    }

    /// Events with `seq > since`.
    pub fn events(&self, trial_id: &str, since: u64) -> Result<Vec<TrialEvent>, ServiceError> {
        let entry = self.entry(trial_id)?;
        let guard = entry.lock();
        Ok(guard.record.events().iter().filter(|e| e.seq > since).cloned().collect())
    }

    pub fn preview(&self, trial_id: &str, outcomes: &[HypotheticalOutcome]) -> Result<Preview, ServiceError> {
        self.entry(trial_id)?.lock().record.preview(outcomes)
    }

    /// Copy of the in-memory record, for comparison with a replay.
    pub fn record(&self, trial_id: &str) -> Result<TrialRecord, ServiceError> {
        Ok(self.entry(trial_id)?.lock().record.clone())
    }
}
