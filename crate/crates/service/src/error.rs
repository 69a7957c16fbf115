use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] erade_core::Error),
    #[error("unknown trial {0}")]
    UnknownTrial(String),
    #[error("trial {trial_id} is completed ({max_n} patients enrolled)")]
    Completed { trial_id: String, max_n: usize },
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("journal of trial {trial_id} is corrupt at seq {seq}: {reason}")]
    Corruption { trial_id: String, seq: u64, reason: String },
    #[error("journal i/o: {0}")]
    Io(#[from] io::Error),
    #[error("missing or wrong bearer token")]
    Unauthorized,
}

impl ServiceError {
    pub(crate) fn corruption(trial_id: &str, seq: u64, reason: impl Into<String>) -> Self {
        ServiceError::Corruption {
            trial_id: trial_id.to_string(),
            seq,
            reason: reason.into(),
        }
    }

    /// HTTP status code for the error.
    pub fn status(&self) -> u16 {
        use erade_core::Error as E;
        match self {
            ServiceError::Core(E::UnknownPatient(_)) | ServiceError::UnknownTrial(_) => 404,
            ServiceError::Core(E::DuplicateOutcome(_)) | ServiceError::Completed { .. } => 409,
            ServiceError::Core(_) | ServiceError::BadRequest(_) => 400,
            ServiceError::Unauthorized => 401,
            ServiceError::Corruption { .. } | ServiceError::Io(_) => 500,
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        use erade_core::Error as E;
        match self {
            ServiceError::Core(E::UnknownPatient(_)) => "unknown_patient",
            ServiceError::Core(E::DuplicateOutcome(_)) => "duplicate_outcome",
            ServiceError::Core(E::VariantMismatch { .. }) => "variant_mismatch",
            ServiceError::Core(_) | ServiceError::BadRequest(_) => "invalid",
            ServiceError::UnknownTrial(_) => "unknown_trial",
            ServiceError::Completed { .. } => "completed",
            ServiceError::Corruption { .. } => "corrupt_journal",
            ServiceError::Io(_) => "storage",
            ServiceError::Unauthorized => "unauthorized",
        }
    }
}
