//! Live allocation service for sequential two-arm trials.
//!
//! Every mutation is first written to a per-trial append-only JSON-lines
//! journal and only then applied in memory. On startup each journal is
//! replayed, and every recorded assignment is recomputed from the prefix
//! state so that a tampered or corrupted journal is refused.

pub mod error;
pub mod http;
pub mod journal;
pub mod record;
pub mod registry;

pub use error::ServiceError;
pub use http::{router, serve, ServeOptions};
pub use journal::{EventBody, Journal, TrialEvent};
pub use record::{CreateTrial, EnrollResponse, HistoryPoint, HypotheticalOutcome, Preview, Snapshot, TrialRecord, TrialStatus};
pub use registry::TrialService;

/// Schema tags carried by every journal line and API payload.
pub mod schema {
    pub const EVENT: &str = "erade.trial-event/1";
    pub const SNAPSHOT: &str = "erade.trial-snapshot/1";
    pub const ENROLLMENT: &str = "erade.enrollment/1";
    pub const PREVIEW: &str = "erade.preview/1";
    pub const EVENTS: &str = "erade.trial-events/1";
    pub const ERROR: &str = "erade.error/1";
}
