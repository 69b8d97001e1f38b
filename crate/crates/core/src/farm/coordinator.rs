use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::job::{CompletionStatus, JobState, RenderJob, StateCounts};
use super::journal::{read_journal, Journal, JournalEvent};
use super::report::{mean_slot_time, throughput_per_minute, BatchReport};
use super::FarmError;

pub const DEFAULT_LEASE_TIMEOUT: f64 = 120.0;
pub const DEFAULT_MAX_RETRIES: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordinatorConfig {
    /// Seconds of worker silence after which its jobs are reclaimed.
    pub lease_timeout: f64,
    /// A job fails permanently once its attempt counter reaches this value.
    pub max_retries: u32,
}

impl Default for CoordinatorConfig {
    fn default() -> Self {
        Self {
            lease_timeout: DEFAULT_LEASE_TIMEOUT,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerState {
    pub worker_id: String,
    pub capacity: usize,
    pub in_flight: BTreeSet<String>,
    pub last_heartbeat: f64,
}

#[derive(Debug, Clone)]
struct JobEntry {
    job: RenderJob,
    batch_id: String,
    state: JobState,
    assigned_at: Option<f64>,
}

#[derive(Debug, Clone)]
struct Batch {
    job_ids: Vec<String>,
    pending: VecDeque<String>,
    enqueued_at: f64,
    finished_at: Option<f64>,
    counts: StateCounts,
    retried: u64,
    service_time_sum: f64,
}

/// Outcome of a worker's completion message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompletionOutcome {
    Completed,
    Requeued { attempt: u32 },
    FailedPermanently { attempt: u32 },
}

/// The authoritative job state machine.
///
/// It is sans-IO: every call takes the current time in seconds, and every
/// state change is first appended to the journal (when one is attached) and
/// then applied, so replaying the journal rebuilds the same state.
pub struct Coordinator {
    config: CoordinatorConfig,
    jobs: HashMap<String, JobEntry>,
    batches: BTreeMap<String, Batch>,
    batch_order: Vec<String>,
    workers: BTreeMap<String, WorkerState>,
    journal: Option<Journal>,
}

impl Coordinator {
    pub fn new(config: CoordinatorConfig) -> Self {
        Self {
            config,
            jobs: HashMap::new(),
            batches: BTreeMap::new(),
            batch_order: Vec::new(),
            workers: BTreeMap::new(),
            journal: None,
        }
    }

    pub fn with_journal(config: CoordinatorConfig, journal: Journal) -> Self {
        Self {
            journal: Some(journal),
            ..Self::new(config)
        }
    }

    /// Rebuilds state from `path` (if it exists) and keeps appending to it.
    ///
    /// Workers known from the journal are treated as having just sent a
    /// heartbeat, so their running jobs get a fresh lease rather than being
    /// reclaimed immediately.
    pub fn recover(config: CoordinatorConfig, path: &Path, now: f64) -> Result<Self, FarmError> {
        let mut coord = Self::new(config);
        if path.exists() {
            for event in read_journal(path)? {
                coord.apply(&event)?;
            }
        }
        for w in coord.workers.values_mut() {
            w.last_heartbeat = now;
        }
        coord.journal = Some(Journal::open(path)?);
        Ok(coord)
    }

    /// Replays events into a fresh, journal-less coordinator.
    pub fn replay<'a>(
        config: CoordinatorConfig,
        events: impl IntoIterator<Item = &'a JournalEvent>,
    ) -> Result<Self, FarmError> {
        let mut coord = Self::new(config);
        for ev in events {
            coord.apply(ev)?;
        }
        Ok(coord)
    }

    pub fn config(&self) -> &CoordinatorConfig {
        &self.config
    }

    fn commit(&mut self, event: JournalEvent) -> Result<(), FarmError> {
        if let Some(j) = self.journal.as_mut() {
            j.append(&event)?;
        }
        self.apply(&event)
    }

    /// Applies one journaled event without writing it to the journal again.
    pub fn apply(&mut self, event: &JournalEvent) -> Result<(), FarmError> {
        match event {
            JournalEvent::BatchEnqueued { batch_id, jobs, at } => {
                let mut batch = Batch {
                    job_ids: Vec::with_capacity(jobs.len()),
                    pending: VecDeque::with_capacity(jobs.len()),
                    enqueued_at: *at,
                    finished_at: None,
                    counts: StateCounts::default(),
                    retried: 0,
                    service_time_sum: 0.0,
                };
                for job in jobs {
                    batch.job_ids.push(job.job_id.clone());
                    batch.pending.push_back(job.job_id.clone());
                    batch.counts.pending += 1;
                    self.jobs.insert(
                        job.job_id.clone(),
                        JobEntry {
                            job: job.clone(),
                            batch_id: batch_id.clone(),
                            state: JobState::Pending,
                            assigned_at: None,
                        },
                    );
                }
                self.batches.insert(batch_id.clone(), batch);
                self.batch_order.push(batch_id.clone());
            }
            JournalEvent::WorkerRegistered {
                worker_id,
                capacity,
                at,
            } => {
                let w = self
                    .workers
                    .entry(worker_id.clone())
                    .or_insert_with(|| WorkerState {
                        worker_id: worker_id.clone(),
                        capacity: *capacity,
                        in_flight: BTreeSet::new(),
                        last_heartbeat: *at,
                    });
                w.capacity = *capacity;
                w.last_heartbeat = *at;
            }
            JournalEvent::JobAssigned { job_id, worker_id, at } => {
                let entry = self.jobs.get_mut(job_id).ok_or_else(|| replay_err(job_id))?;
                let batch = self.batches.get_mut(&entry.batch_id).expect("job has batch");
                if let Some(pos) = batch.pending.iter().position(|j| j == job_id) {
                    batch.pending.remove(pos);
                }
                entry.state = JobState::Running {
                    worker_id: worker_id.clone(),
                };
                entry.assigned_at = Some(*at);
                batch.counts.pending -= 1;
                batch.counts.running += 1;
                if let Some(w) = self.workers.get_mut(worker_id) {
                    w.in_flight.insert(job_id.clone());
                    w.last_heartbeat = w.last_heartbeat.max(*at);
                }
            }
            JournalEvent::JobCompleted { job_id, worker_id, at } => {
                let entry = self.jobs.get_mut(job_id).ok_or_else(|| replay_err(job_id))?;
                let batch = self.batches.get_mut(&entry.batch_id).expect("job has batch");
                entry.state = JobState::Completed;
                batch.counts.running -= 1;
                batch.counts.completed += 1;
                batch.service_time_sum += at - entry.assigned_at.unwrap_or(*at);
                if batch.counts.finished() == batch.job_ids.len() {
                    batch.finished_at = Some(*at);
                }
                if let Some(w) = self.workers.get_mut(worker_id) {
                    w.in_flight.remove(job_id);
                }
            }
            JournalEvent::JobFailed {
                job_id,
                worker_id,
                attempt,
                permanent,
                at,
                ..
            } => {
                let entry = self.jobs.get_mut(job_id).ok_or_else(|| replay_err(job_id))?;
                let batch = self.batches.get_mut(&entry.batch_id).expect("job has batch");
                entry.job.attempt = *attempt;
                entry.assigned_at = None;
                batch.counts.running -= 1;
                if *permanent {
                    entry.state = JobState::FailedPermanent;
                    batch.counts.failed_permanent += 1;
                    if batch.counts.finished() == batch.job_ids.len() {
                        batch.finished_at = Some(*at);
                    }
                } else {
                    entry.state = JobState::Pending;
                    batch.counts.pending += 1;
                    batch.retried += 1;
                    batch.pending.push_back(job_id.clone());
                }
                if let Some(w) = self.workers.get_mut(worker_id) {
                    w.in_flight.remove(job_id);
                }
            }
        }
        Ok(())
    }

    /// Registers a batch; all its jobs start PENDING. Returns the batch id.
    pub fn enqueue_batch(&mut self, jobs: Vec<RenderJob>, now: f64) -> Result<String, FarmError> {
        if jobs.is_empty() {
            return Err(FarmError::EmptyBatch);
        }
        let mut seen = HashSet::new();
        let mut duplicates: Vec<String> = jobs
            .iter()
            .filter(|j| !seen.insert(j.job_id.as_str()) || self.jobs.contains_key(&j.job_id))
            .map(|j| j.job_id.clone())
            .collect();
        if !duplicates.is_empty() {
            duplicates.sort();
            duplicates.dedup();
            return Err(FarmError::DuplicateJobs(duplicates));
        }
        if let Some(bad) = jobs
            .iter()
            .find(|j| j.job_id.is_empty() || j.sequence_uri.is_empty() || j.output_uri.is_empty())
        {
            return Err(FarmError::InvalidJob(format!(
                "job '{}' has an empty id or uri",
                bad.job_id
            )));
        }
        let batch_id = format!("batch-{:04}", self.batches.len() + 1);
        self.commit(JournalEvent::BatchEnqueued {
            batch_id: batch_id.clone(),
            jobs,
            at: now,
        })?;
        Ok(batch_id)
    }

    /// HELLO: registers a worker or updates its capacity.
    pub fn hello(&mut self, worker_id: &str, capacity: usize, now: f64) -> Result<(), FarmError> {
        if capacity == 0 {
            return Err(FarmError::Protocol("capacity must be at least 1".into()));
        }
        match self.workers.get_mut(worker_id) {
            Some(w) if w.capacity == capacity => {
                w.last_heartbeat = now;
                Ok(())
            }
            _ => self.commit(JournalEvent::WorkerRegistered {
                worker_id: worker_id.into(),
                capacity,
                at: now,
            }),
        }
    }

    pub fn heartbeat(&mut self, worker_id: &str, now: f64) -> Result<(), FarmError> {
        let w = self
            .workers
            .get_mut(worker_id)
            .ok_or_else(|| FarmError::UnknownWorker(worker_id.into()))?;
        w.last_heartbeat = w.last_heartbeat.max(now);
        Ok(())
    }

    /// POLL: hands the worker up to its free capacity of pending jobs, oldest
    /// batch first and FIFO within a batch. Also counts as a heartbeat.
    pub fn assign(&mut self, worker_id: &str, now: f64) -> Result<Vec<RenderJob>, FarmError> {
        self.heartbeat(worker_id, now)?;
        let w = &self.workers[worker_id];
        let free = w.capacity.saturating_sub(w.in_flight.len());
        let mut picked = Vec::with_capacity(free);
        for batch_id in &self.batch_order {
            if picked.len() == free {
                break;
            }
            let batch = &self.batches[batch_id];
            picked.extend(batch.pending.iter().take(free - picked.len()).cloned());
        }
        let mut out = Vec::with_capacity(picked.len());
        for job_id in picked {
            self.commit(JournalEvent::JobAssigned {
                job_id: job_id.clone(),
                worker_id: worker_id.into(),
                at: now,
            })?;
            out.push(self.jobs[&job_id].job.clone());
        }
        Ok(out)
    }

    /// COMPLETE: `Done` finishes the job; `Fail` bumps its attempt counter and
    /// requeues it until the counter reaches `max_retries`.
    ///
    /// A completion for a job the worker does not currently hold (a duplicate,
    /// or one whose lease was already reclaimed) changes nothing and returns
    /// [`FarmError::NotOwned`].
    pub fn complete(
        &mut self,
        worker_id: &str,
        job_id: &str,
        status: CompletionStatus,
        detail: &str,
        now: f64,
    ) -> Result<CompletionOutcome, FarmError> {
        self.heartbeat(worker_id, now)?;
        let owned = self.jobs.get(job_id).is_some_and(|e| {
            matches!(&e.state, JobState::Running { worker_id: w } if w == worker_id)
        });
        if !owned {
            log::warn!("ignoring stale completion of {job_id} from {worker_id}");
            return Err(FarmError::NotOwned {
                worker_id: worker_id.into(),
                job_id: job_id.into(),
            });
        }
        match status {
            CompletionStatus::Done => {
                self.commit(JournalEvent::JobCompleted {
                    job_id: job_id.into(),
                    worker_id: worker_id.into(),
                    at: now,
                })?;
                Ok(CompletionOutcome::Completed)
            }
            CompletionStatus::Fail => self.fail(job_id, worker_id, detail, false, now),
        }
    }

    fn fail(
        &mut self,
        job_id: &str,
        worker_id: &str,
        detail: &str,
        lease_expired: bool,
        now: f64,
    ) -> Result<CompletionOutcome, FarmError> {
        let attempt = self.jobs[job_id].job.attempt + 1;
        let permanent = attempt >= self.config.max_retries;
        self.commit(JournalEvent::JobFailed {
            job_id: job_id.into(),
            worker_id: worker_id.into(),
            attempt,
            permanent,
            lease_expired,
            detail: detail.into(),
            at: now,
        })?;
        Ok(if permanent {
            CompletionOutcome::FailedPermanently { attempt }
        } else {
            CompletionOutcome::Requeued { attempt }
        })
    }

    /// Reclaims the jobs of every worker silent for longer than the lease
    /// timeout. Each reclaimed job counts as a failed attempt. Returns the
    /// ids of the reclaimed jobs.
    pub fn reap_stale(&mut self, now: f64) -> Result<Vec<String>, FarmError> {
        let stale: Vec<(String, Vec<String>)> = self
            .workers
            .values()
            .filter(|w| !w.in_flight.is_empty() && now - w.last_heartbeat > self.config.lease_timeout)
            .map(|w| (w.worker_id.clone(), w.in_flight.iter().cloned().collect()))
            .collect();
        let mut reclaimed = Vec::new();
        for (worker_id, jobs) in stale {
            log::warn!("worker {worker_id} lease expired, reclaiming {} job(s)", jobs.len());
            for job_id in jobs {
                self.fail(&job_id, &worker_id, "lease expired", true, now)?;
                reclaimed.push(job_id);
            }
        }
        Ok(reclaimed)
    }

    pub fn counts(&self, batch_id: &str) -> Result<StateCounts, FarmError> {
        self.batches
            .get(batch_id)
            .map(|b| b.counts)
            .ok_or_else(|| FarmError::UnknownBatch(batch_id.into()))
    }

    pub fn job_state(&self, job_id: &str) -> Option<(&RenderJob, &JobState)> {
        self.jobs.get(job_id).map(|e| (&e.job, &e.state))
    }

    pub fn batch_jobs(&self, batch_id: &str) -> Result<Vec<(&RenderJob, &JobState)>, FarmError> {
        let batch = self
            .batches
            .get(batch_id)
            .ok_or_else(|| FarmError::UnknownBatch(batch_id.into()))?;
        Ok(batch
            .job_ids
            .iter()
            .map(|id| {
                let e = &self.jobs[id];
                (&e.job, &e.state)
            })
            .collect())
    }

    pub fn batch_ids(&self) -> &[String] {
        &self.batch_order
    }

    pub fn workers(&self) -> impl Iterator<Item = &WorkerState> {
        self.workers.values()
    }

    pub fn is_finished(&self, batch_id: &str) -> Result<bool, FarmError> {
        let b = self
            .batches
            .get(batch_id)
            .ok_or_else(|| FarmError::UnknownBatch(batch_id.into()))?;
        Ok(b.counts.finished() == b.job_ids.len())
    }

    pub fn batch_report(&self, batch_id: &str, now: f64) -> Result<BatchReport, FarmError> {
        let b = self
            .batches
            .get(batch_id)
            .ok_or_else(|| FarmError::UnknownBatch(batch_id.into()))?;
        let wall_time = (b.finished_at.unwrap_or(now) - b.enqueued_at).max(0.0);
        let slots = self.workers.values().map(|w| w.capacity).sum();
        let completed = b.counts.completed;
        Ok(BatchReport {
            batch_id: batch_id.into(),
            total_jobs: b.job_ids.len(),
            completed,
            failed_permanently: b.counts.failed_permanent,
            retried: b.retried,
            pending: b.counts.pending,
            running: b.counts.running,
            wall_time,
            throughput: throughput_per_minute(completed, wall_time),
            slots,
            mean_slot_time: mean_slot_time(wall_time, slots, completed),
            mean_service_time: (completed > 0).then(|| b.service_time_sum / completed as f64),
        })
    }
}

fn replay_err(job_id: &str) -> FarmError {
    FarmError::Journal(format!("event references unknown job '{job_id}'"))
}
