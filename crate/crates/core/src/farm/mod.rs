//! Coordinator/worker distribution of render jobs.
//!
//! The [`Coordinator`] is a sans-IO state machine backed by an append-only
//! journal. [`server`] exposes it over TCP, [`worker`] pulls and executes
//! jobs, and [`sim`] drives the same state machine in virtual time.

mod coordinator;
mod job;
mod journal;
pub mod protocol;
mod report;
pub mod server;
pub mod sim;
pub mod worker;

pub use coordinator::{
    CompletionOutcome, Coordinator, CoordinatorConfig, WorkerState, DEFAULT_LEASE_TIMEOUT,
    DEFAULT_MAX_RETRIES,
};
pub use job::{CompletionStatus, JobState, RenderJob, StateCounts};
pub use journal::{read_journal, Journal, JournalEvent};
pub use report::{mean_slot_time, throughput_per_minute, BatchReport};

#[derive(Debug, thiserror::Error)]
pub enum FarmError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("duplicate job ids: {}", .0.join(", "))]
    DuplicateJobs(Vec<String>),
    #[error("invalid job: {0}")]
    InvalidJob(String),
    #[error("unknown worker '{0}'")]
    UnknownWorker(String),
    #[error("unknown batch '{0}'")]
    UnknownBatch(String),
    #[error("job '{job_id}' is not running on worker '{worker_id}'")]
    NotOwned { worker_id: String, job_id: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("journal: {0}")]
    Journal(String),
    #[error("coordinator replied with error: {0}")]
    Remote(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
