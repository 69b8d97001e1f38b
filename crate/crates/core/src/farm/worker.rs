//! Pull-based worker: polls the coordinator, runs up to `capacity` jobs at a
//! time and reports each result.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::job::{CompletionStatus, RenderJob};
use super::protocol::Message;
use super::server::{unexpected, Client};
use super::FarmError;
use crate::mesh::load_sequence;
use crate::render::{default_cameras, render_variant, Camera, RenderSettings, DEFAULT_RESOLUTION};
use crate::texture::{fnv1a, load_texture};

/// Runs one job. `cancel` is raised when the worker is killed; executors
/// should abandon work without publishing output when they see it.
pub trait JobExecutor: Send + Sync + 'static {
    fn execute(&self, job: &RenderJob, cancel: &AtomicBool) -> Result<(), String>;
}

/// Renders the job's clip with the real rasterizer.
pub struct RenderExecutor {
    /// Cameras looked up by view name; the standard front/side pair framed
    /// on the mesh is used when a name is not found here.
    pub cameras: Vec<Camera>,
    pub resolution: u32,
    pub settings: RenderSettings,
}

impl Default for RenderExecutor {
    fn default() -> Self {
        Self {
            cameras: Vec::new(),
            resolution: DEFAULT_RESOLUTION,
            settings: RenderSettings::default(),
        }
    }
}

impl JobExecutor for RenderExecutor {
    fn execute(&self, job: &RenderJob, _cancel: &AtomicBool) -> Result<(), String> {
        let seq = load_sequence(Path::new(&job.sequence_uri), &job.patient_id, &job.clip_id)
            .map_err(|e| e.to_string())?;
        let atlas = match (&job.texture_uri, &job.texture_id) {
            (Some(uri), id) => {
                let id = id.as_deref().unwrap_or(uri);
                Some(load_texture(Path::new(uri), id).map_err(|e| e.to_string())?)
            }
            (None, Some(id)) => return Err(format!("texture '{id}' has no uri")),
            (None, None) => None,
        };
        let camera = match self.cameras.iter().find(|c| c.view_name == job.view_name) {
            Some(c) => c.clone(),
            None => {
                let bounds = seq.frames()[0].bounds().ok_or("empty mesh")?;
                default_cameras(bounds, self.resolution)
                    .into_iter()
                    .find(|c| c.view_name == job.view_name)
                    .ok_or_else(|| format!("no camera named '{}'", job.view_name))?
            }
        };
        render_variant(&seq, atlas.as_ref(), &camera, &self.settings, Path::new(&job.output_uri))
            .map(|_| ())
            .map_err(|e| e.to_string())
    }
}

/// Stand-in job for exercising the farm: sleeps, fails with a fixed
/// probability that is a deterministic function of (seed, job, attempt), and
/// on success publishes a marker file at `output_uri` via temp-and-rename.
pub struct SimulatedExecutor {
    pub duration: Duration,
    pub failure_rate: f64,
    pub seed: u64,
    pub executions: AtomicU64,
}

impl SimulatedExecutor {
    pub fn new(duration: Duration, failure_rate: f64, seed: u64) -> Self {
        Self {
            duration,
            failure_rate,
            seed,
            executions: AtomicU64::new(0),
        }
    }
}

/// Whether simulated attempt `attempt` of `job_id` fails.
pub fn injected_failure(seed: u64, job_id: &str, attempt: u32, rate: f64) -> bool {
    let h = fnv1a(format!("{seed}/{job_id}/{attempt}").as_bytes());
    ChaCha8Rng::seed_from_u64(h).gen::<f64>() < rate
}

impl JobExecutor for SimulatedExecutor {
    fn execute(&self, job: &RenderJob, cancel: &AtomicBool) -> Result<(), String> {
        self.executions.fetch_add(1, Ordering::Relaxed);
        let deadline = Instant::now() + self.duration;
        while Instant::now() < deadline {
            if cancel.load(Ordering::SeqCst) {
                return Err("cancelled".into());
            }
            thread::sleep((deadline - Instant::now()).min(Duration::from_millis(5)));
        }
        if injected_failure(self.seed, &job.job_id, job.attempt, self.failure_rate) {
            return Err("injected failure".into());
        }
        publish_marker(Path::new(&job.output_uri), &job.job_id).map_err(|e| e.to_string())
    }
}

/// Writes `content` to `path` through a temporary sibling and a rename.
/// An existing output is left alone.
pub fn publish_marker(path: &Path, content: &str) -> std::io::Result<()> {
    if path.exists() {
        return Ok(());
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp-{}-{:x}", std::process::id(), fnv1a(content.as_bytes()) ^ tmp_nonce()));
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)
}

fn tmp_nonce() -> u64 {
    static N: AtomicU64 = AtomicU64::new(0);
    N.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone)]
pub struct WorkerConfig {
    pub worker_id: String,
    pub capacity: usize,
    /// Pause between polls when the queue is empty.
    pub poll_interval: Duration,
    /// Heartbeat period while all slots are busy.
    pub heartbeat_interval: Duration,
    pub reconnect_delay: Duration,
}

impl WorkerConfig {
    pub fn new(worker_id: impl Into<String>, capacity: usize) -> Self {
        Self {
            worker_id: worker_id.into(),
            capacity,
            poll_interval: Duration::from_millis(200),
            heartbeat_interval: Duration::from_secs(10),
            reconnect_delay: Duration::from_millis(500),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkerStats {
    pub succeeded: u64,
    pub failed: u64,
    /// Completions the coordinator refused (e.g. the lease had expired).
    pub rejected: u64,
}

pub struct WorkerHandle {
    stop: Arc<AtomicBool>,
    kill: Arc<AtomicBool>,
    thread: Option<JoinHandle<Result<WorkerStats, FarmError>>>,
}

impl WorkerHandle {
    /// Finishes and reports the jobs in flight, then exits.
    pub fn stop(mut self) -> Result<WorkerStats, FarmError> {
        self.stop.store(true, Ordering::SeqCst);
        self.join()
    }

    /// Simulates a crash: drops the connection and abandons in-flight jobs
    /// without reporting them.
    pub fn kill(mut self) {
        self.kill.store(true, Ordering::SeqCst);
        let _ = self.join();
    }

    /// Waits for the worker to exit on its own.
    pub fn join(&mut self) -> Result<WorkerStats, FarmError> {
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(FarmError::Protocol("worker panicked".into()))),
            None => Ok(WorkerStats::default()),
        }
    }
}

impl Drop for WorkerHandle {
    fn drop(&mut self) {
        if self.thread.is_some() {
            self.stop.store(true, Ordering::SeqCst);
            let _ = self.join();
        }
    }
}

pub fn spawn_worker(
    coordinator: SocketAddr,
    config: WorkerConfig,
    executor: Arc<dyn JobExecutor>,
) -> WorkerHandle {
    let stop = Arc::new(AtomicBool::new(false));
    let kill = Arc::new(AtomicBool::new(false));
    let thread = {
        let (stop, kill) = (Arc::clone(&stop), Arc::clone(&kill));
        thread::spawn(move || run_worker(coordinator, &config, executor, &stop, &kill))
    };
    WorkerHandle {
        stop,
        kill,
        thread: Some(thread),
    }
}

struct Finished {
    job_id: String,
    result: Result<(), String>,
}

struct WorkerLoop<'a> {
    config: &'a WorkerConfig,
    executor: Arc<dyn JobExecutor>,
    kill: Arc<AtomicBool>,
    tx: mpsc::Sender<Finished>,
    in_flight: HashMap<String, JoinHandle<()>>,
    unreported: Vec<Finished>,
    stats: WorkerStats,
    last_contact: Instant,
}

/// The worker loop. Returns when `stop` is raised and nothing is in flight,
/// or as soon as `kill` is raised.
pub fn run_worker(
    coordinator: SocketAddr,
    config: &WorkerConfig,
    executor: Arc<dyn JobExecutor>,
    stop: &AtomicBool,
    kill: &Arc<AtomicBool>,
) -> Result<WorkerStats, FarmError> {
    let (tx, rx) = mpsc::channel::<Finished>();
    let mut w = WorkerLoop {
        config,
        executor,
        kill: Arc::clone(kill),
        tx,
        in_flight: HashMap::new(),
        unreported: Vec::new(),
        stats: WorkerStats::default(),
        last_contact: Instant::now(),
    };
    let mut client: Option<Client> = None;

    loop {
        if kill.load(Ordering::SeqCst) {
            log::warn!("worker {} killed with {} job(s) in flight", config.worker_id, w.in_flight.len());
            return Ok(w.stats);
        }
        let stopping = stop.load(Ordering::SeqCst);
        if stopping && w.in_flight.is_empty() && w.unreported.is_empty() {
            return Ok(w.stats);
        }

        let conn = match client.as_mut() {
            Some(c) => c,
            None => match connect(coordinator, config) {
                Ok(c) => client.insert(c),
                Err(e) => {
                    log::warn!("worker {}: cannot reach coordinator: {e}", config.worker_id);
                    thread::sleep(config.reconnect_delay);
                    continue;
                }
            },
        };

        if let Err(e) = w.exchange(conn, stopping) {
            log::warn!("worker {}: connection lost: {e}", config.worker_id);
            client = None;
            thread::sleep(config.reconnect_delay);
            continue;
        }

        // wakes early when a job finishes
        match rx.recv_timeout(config.poll_interval) {
            Ok(done) => w.unreported.push(done),
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => unreachable!("sender held by the loop"),
        }
        w.unreported.extend(rx.try_iter());
        for f in &w.unreported {
            if let Some(h) = w.in_flight.remove(&f.job_id) {
                let _ = h.join();
            }
        }
    }
}

fn connect(addr: SocketAddr, config: &WorkerConfig) -> Result<Client, FarmError> {
    let mut c = Client::connect(addr)?;
    match c.call(&Message::Hello {
        worker_id: config.worker_id.clone(),
        capacity: config.capacity,
    })? {
        Message::Ack { .. } => Ok(c),
        other => Err(unexpected(other)),
    }
}

impl WorkerLoop<'_> {
    /// Reports finished jobs, then polls for more if slots are free.
    fn exchange(&mut self, client: &mut Client, stopping: bool) -> Result<(), FarmError> {
        let worker_id = &self.config.worker_id;
        while let Some(f) = self.unreported.first() {
            let (status, detail) = match &f.result {
                Ok(()) => (CompletionStatus::Done, String::new()),
                Err(e) => (CompletionStatus::Fail, e.clone()),
            };
            let reply = client.request(&Message::Complete {
                worker_id: worker_id.clone(),
                job_id: f.job_id.clone(),
                status,
                detail,
            })?;
            self.last_contact = Instant::now();
            match reply {
                Message::Ack { .. } => match status {
                    CompletionStatus::Done => self.stats.succeeded += 1,
                    CompletionStatus::Fail => self.stats.failed += 1,
                },
                Message::Error { message } => {
                    log::warn!("worker {worker_id}: completion of {} rejected: {message}", f.job_id);
                    self.stats.rejected += 1;
                }
                other => return Err(unexpected(other)),
            }
            self.unreported.remove(0);
        }

        if stopping || self.in_flight.len() >= self.config.capacity {
            if self.last_contact.elapsed() >= self.config.heartbeat_interval {
                client.call(&Message::Heartbeat {
                    worker_id: worker_id.clone(),
                })?;
                self.last_contact = Instant::now();
            }
            return Ok(());
        }

        let jobs = match client.call(&Message::Poll {
            worker_id: worker_id.clone(),
        })? {
            Message::Assign { jobs } => jobs,
            other => return Err(unexpected(other)),
        };
        self.last_contact = Instant::now();
        for job in jobs {
            let (executor, kill, tx) = (Arc::clone(&self.executor), Arc::clone(&self.kill), self.tx.clone());
            let job_id = job.job_id.clone();
            let handle = thread::spawn(move || {
                let result = executor.execute(&job, &kill);
                if !kill.load(Ordering::SeqCst) {
                    let _ = tx.send(Finished {
                        job_id: job.job_id,
                        result,
                    });
                }
            });
            self.in_flight.insert(job_id, handle);
        }
        Ok(())
    }
}
