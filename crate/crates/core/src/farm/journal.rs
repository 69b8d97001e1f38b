use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::job::RenderJob;
use super::FarmError;

/// One coordinator state transition. The journal is one of these per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum JournalEvent {
    BatchEnqueued {
        batch_id: String,
        jobs: Vec<RenderJob>,
        at: f64,
    },
    WorkerRegistered {
        worker_id: String,
        capacity: usize,
        at: f64,
    },
    JobAssigned {
        job_id: String,
        worker_id: String,
        at: f64,
    },
    JobCompleted {
        job_id: String,
        worker_id: String,
        at: f64,
    },
    /// A failed attempt, either reported by the worker or from an expired
    /// lease. `attempt` is the counter after the failure.
    JobFailed {
        job_id: String,
        worker_id: String,
        attempt: u32,
        permanent: bool,
        lease_expired: bool,
        detail: String,
        at: f64,
    },
}

/// Append-only JSON-lines log of [`JournalEvent`]s, flushed per event.
pub struct Journal {
    out: BufWriter<File>,
    sync: bool,
}

impl Journal {
    pub fn open(path: &Path) -> Result<Self, FarmError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            out: BufWriter::new(file),
            sync: false,
        })
    }

    /// fsync after every event instead of only flushing.
    pub fn with_sync(mut self, sync: bool) -> Self {
        self.sync = sync;
        self
    }

    pub fn append(&mut self, event: &JournalEvent) -> Result<(), FarmError> {
        serde_json::to_writer(&mut self.out, event)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        if self.sync {
            self.out.get_ref().sync_data()?;
        }
        Ok(())
    }
}

/// Reads every event of a journal file. A torn final line (a crash mid-write)
/// is dropped with a warning; corruption anywhere else is an error.
pub fn read_journal(path: &Path) -> Result<Vec<JournalEvent>, FarmError> {
    let reader = BufReader::new(File::open(path)?);
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    let mut events = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(ev) => events.push(ev),
            Err(e) if i + 1 == lines.len() => {
                log::warn!("dropping torn journal tail at line {}: {e}", i + 1);
            }
            Err(e) => {
                return Err(FarmError::Journal(format!("line {}: {e}", i + 1)));
            }
        }
    }
    Ok(events)
}
