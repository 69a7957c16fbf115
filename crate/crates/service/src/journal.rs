//! Append-only JSON-lines journal, one file per trial.
//!
//! A line is acknowledged only after `fsync`. On open, an unterminated final
//! line is a torn write from a crash and is truncated away; any other
//! malformed line is corruption.

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use erade_core::{Arm, Branch, DesignConfig, Outcome, ResponseKind, UrnState};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::schema;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialEvent {
    pub schema: String,
    pub seq: u64,
    pub trial_id: String,
    #[serde(flatten)]
    pub body: EventBody,
    pub ts: DateTime<Utc>,
}

impl TrialEvent {
    pub fn new(seq: u64, trial_id: &str, body: EventBody, ts: DateTime<Utc>) -> Self {
        Self {
            schema: schema::EVENT.to_string(),
            seq,
            trial_id: trial_id.to_string(),
            body,
            ts,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    Created(Created),
    Assigned(Assigned),
    Outcome(OutcomeRecorded),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub design: DesignConfig,
    pub response: ResponseKind,
    pub max_n: usize,
    pub master_seed: u64,
    pub stream_index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assigned {
    pub patient: usize,
    pub arm: Arm,
    pub probability_used: f64,
    pub branch: Branch,
    /// Draws consumed from the trial's stream before this assignment.
    pub stream_position: u64,
    pub draws: u64,
    /// Urn composition after the draw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub urn: Option<UrnState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecorded {
    pub patient: usize,
    pub outcome: Outcome,
    /// Urn composition after the update.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub urn: Option<UrnState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
}

pub struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    pub fn path_for(dir: &Path, trial_id: &str) -> PathBuf {
        dir.join(format!("{trial_id}.jsonl"))
    }

    /// Creates a new, empty journal. Fails if the file exists.
    pub fn create(dir: &Path, trial_id: &str) -> Result<Self, ServiceError> {
        let path = Self::path_for(dir, trial_id);
        let file = OpenOptions::new().append(true).create_new(true).open(&path)?;
        Ok(Self { path, file })
    }

    /// Opens an existing journal and returns its events.
    pub fn open(path: &Path) -> Result<(Self, Vec<TrialEvent>), ServiceError> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if complete < bytes.len() {
            log::warn!(
                "{}: dropping {} bytes of an unterminated final line",
                path.display(),
                bytes.len() - complete
            );
            OpenOptions::new().write(true).open(path)?.set_len(complete as u64)?;
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut events = Vec::new();
        for (i, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
            if line.is_empty() {
                continue;
            }
            let event: TrialEvent = serde_json::from_slice(line).map_err(|e| {
                ServiceError::corruption(&name, i as u64 + 1, format!("line {}: {e}", i + 1))
            })?;
            events.push(event);
        }
        let file = OpenOptions::new().append(true).open(path)?;
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
            },
            events,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one event and syncs it to disk. On failure the file is cut
    /// back to its previous length.
    pub fn append(&mut self, event: &TrialEvent) -> Result<(), ServiceError> {
        let mut line = serde_json::to_vec(event).map_err(std::io::Error::other)?;
        line.push(b'\n');
        let before = self.file.metadata()?.len();
        let written = self.file.write_all(&line).and_then(|_| self.file.sync_data());
        if let Err(e) = written {
            let _ = self.file.set_len(before);
            return Err(e.into());
        }
        Ok(())
    }
}

/// Journal files in `dir`.
pub fn journal_files(dir: &Path) -> Result<Vec<PathBuf>, ServiceError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "jsonl") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}
