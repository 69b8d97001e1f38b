//! Discrete-event simulation of a farm in virtual time.
//!
//! Workers are modelled as polling clients with fixed job durations; the
//! coordinator is the real [`Coordinator`] with its real journal, so the
//! state machine, retry rules and recovery are exercised exactly as served.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::path::PathBuf;

use super::coordinator::{Coordinator, CoordinatorConfig};
use super::job::{CompletionStatus, JobState, RenderJob, StateCounts};
use super::journal::Journal;
use super::report::BatchReport;
use super::worker::injected_failure;
use super::FarmError;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub jobs: usize,
    pub workers: usize,
    pub capacity: usize,
    /// Virtual seconds per job attempt.
    pub job_duration: f64,
    pub failure_rate: f64,
    pub seed: u64,
    pub poll_interval: f64,
    pub heartbeat_interval: f64,
    pub reap_interval: f64,
    pub coordinator: CoordinatorConfig,
    /// `(worker index, time)`: the worker crashes, losing its running jobs.
    pub kills: Vec<(usize, f64)>,
    /// Times at which the coordinator process is replaced by one recovered
    /// from the journal.
    pub coordinator_restarts: Vec<f64>,
    /// Journal file; required when `coordinator_restarts` is non-empty.
    pub journal: Option<PathBuf>,
    /// Give up after this much virtual time.
    pub time_limit: f64,
}

impl SimConfig {
    pub fn new(jobs: usize, workers: usize, job_duration: f64) -> Self {
        Self {
            jobs,
            workers,
            capacity: 1,
            job_duration,
            failure_rate: 0.0,
            seed: 0,
            poll_interval: 0.1,
            heartbeat_interval: 10.0,
            reap_interval: 1.0,
            coordinator: CoordinatorConfig::default(),
            kills: Vec::new(),
            coordinator_restarts: Vec::new(),
            journal: None,
            time_limit: 1e7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub batch_id: String,
    pub report: BatchReport,
    pub counts: StateCounts,
    pub final_states: BTreeMap<String, JobState>,
    /// Attempts started per job, across all workers.
    pub executions: BTreeMap<String, u32>,
    /// Outputs actually written per job. Temp-and-rename publishing means a
    /// second successful attempt finds the output present and writes nothing.
    pub outputs_written: BTreeMap<String, u32>,
    pub rejected_completions: u64,
    pub lease_requeues: usize,
    pub end_time: f64,
    pub finished: bool,
}

#[derive(Debug, Clone)]
enum Event {
    Poll(usize),
    Finish { worker: usize, job: Box<RenderJob>, epoch: u32 },
    Heartbeat(usize),
    Reap,
    Kill(usize),
    RestartCoordinator,
}

struct Scheduled {
    at: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.at.total_cmp(&self.at).then(other.seq.cmp(&self.seq))
    }
}

struct SimWorker {
    id: String,
    alive: bool,
    /// Bumped on a crash so events of the dead incarnation are dropped.
    epoch: u32,
    running: usize,
    polling: bool,
}

pub fn sim_job(i: usize) -> RenderJob {
    RenderJob {
        job_id: format!("job-{i:05}"),
        patient_id: format!("p{:03}", i / 20),
        clip_id: format!("c{i:05}"),
        texture_id: None,
        view_name: "front".into(),
        sequence_uri: format!("sim://seq/{i}"),
        texture_uri: None,
        output_uri: format!("sim://out/{i}"),
        attempt: 0,
    }
}

pub fn simulate(config: &SimConfig) -> Result<SimOutcome, FarmError> {
    if !config.coordinator_restarts.is_empty() && config.journal.is_none() {
        return Err(FarmError::Journal("coordinator restarts need a journal".into()));
    }
    let mut coord = match &config.journal {
        Some(p) => Coordinator::with_journal(config.coordinator, Journal::open(p)?),
        None => Coordinator::new(config.coordinator),
    };
    let batch_id = coord.enqueue_batch((0..config.jobs).map(sim_job).collect(), 0.0)?;

    let mut queue = BinaryHeap::new();
    let mut seq = 0u64;
    let mut push = |queue: &mut BinaryHeap<Scheduled>, at: f64, event: Event| {
        seq += 1;
        queue.push(Scheduled { at, seq, event });
    };

    let mut workers: Vec<SimWorker> = (0..config.workers)
        .map(|i| SimWorker {
            id: format!("sim-worker-{i}"),
            alive: true,
            epoch: 0,
            running: 0,
            polling: false,
        })
        .collect();
    for (i, w) in workers.iter_mut().enumerate() {
        coord.hello(&w.id, config.capacity, 0.0)?;
        w.polling = true;
        push(&mut queue, 0.0, Event::Poll(i));
        push(&mut queue, config.heartbeat_interval, Event::Heartbeat(i));
    }
    push(&mut queue, config.reap_interval, Event::Reap);
    for &(w, at) in &config.kills {
        push(&mut queue, at, Event::Kill(w));
    }
    for &at in &config.coordinator_restarts {
        push(&mut queue, at, Event::RestartCoordinator);
    }

    let mut executions: BTreeMap<String, u32> = BTreeMap::new();
    let mut outputs_written: BTreeMap<String, u32> = BTreeMap::new();
    let mut published: HashSet<String> = HashSet::new();
    let mut rejected = 0u64;
    let mut lease_requeues = 0usize;
    let mut now = 0.0;

    while let Some(Scheduled { at, event, .. }) = queue.pop() {
        if coord.is_finished(&batch_id)? || at > config.time_limit {
            break;
        }
        now = at;
        match event {
            Event::Poll(i) => {
                let w = &mut workers[i];
                w.polling = false;
                if !w.alive || w.running >= config.capacity {
                    continue;
                }
                let jobs = coord.assign(&w.id, now)?;
                if jobs.is_empty() {
                    w.polling = true;
                    push(&mut queue, now + config.poll_interval, Event::Poll(i));
                }
                for job in jobs {
                    *executions.entry(job.job_id.clone()).or_default() += 1;
                    w.running += 1;
                    let epoch = w.epoch;
                    push(&mut queue, now + config.job_duration, Event::Finish { worker: i, job: Box::new(job), epoch });
                }
            }
            Event::Finish { worker, job, epoch } => {
                let w = &mut workers[worker];
                if !w.alive || w.epoch != epoch {
                    continue;
                }
                w.running -= 1;
                let failed = injected_failure(config.seed, &job.job_id, job.attempt, config.failure_rate);
                let status = if failed {
                    CompletionStatus::Fail
                } else {
                    if published.insert(job.job_id.clone()) {
                        *outputs_written.entry(job.job_id.clone()).or_default() += 1;
                    }
                    CompletionStatus::Done
                };
                match coord.complete(&w.id, &job.job_id, status, "", now) {
                    Ok(_) => {}
                    Err(FarmError::NotOwned { .. }) => rejected += 1,
                    Err(e) => return Err(e),
                }
                if !w.polling {
                    w.polling = true;
                    push(&mut queue, now, Event::Poll(worker));
                }
            }
            Event::Heartbeat(i) => {
                if workers[i].alive {
                    coord.heartbeat(&workers[i].id, now)?;
                    push(&mut queue, now + config.heartbeat_interval, Event::Heartbeat(i));
                }
            }
            Event::Reap => {
                lease_requeues += coord.reap_stale(now)?.len();
                push(&mut queue, now + config.reap_interval, Event::Reap);
            }
            Event::Kill(i) => {
                let w = &mut workers[i];
                log::info!("simulated crash of {} at {now:.1}s", w.id);
                w.alive = false;
                w.epoch += 1;
                w.running = 0;
            }
            Event::RestartCoordinator => {
                let path = config.journal.as_ref().expect("checked above");
                drop(coord);
                coord = Coordinator::recover(config.coordinator, path, now)?;
                log::info!("simulated coordinator restart at {now:.1}s");
            }
        }
    }

    let final_states = coord
        .batch_jobs(&batch_id)?
        .into_iter()
        .map(|(j, s)| (j.job_id.clone(), s.clone()))
        .collect();
    Ok(SimOutcome {
        report: coord.batch_report(&batch_id, now)?,
        counts: coord.counts(&batch_id)?,
        finished: coord.is_finished(&batch_id)?,
        batch_id,
        final_states,
        executions,
        outputs_written,
        rejected_completions: rejected,
        lease_requeues,
        end_time: now,
    })
}
