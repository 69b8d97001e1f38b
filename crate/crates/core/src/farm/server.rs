//! TCP front end for a [`Coordinator`]: one thread per connection, all
//! sessions serialized through a single mutex-guarded state machine.

use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use super::coordinator::{Coordinator, CoordinatorConfig};
use super::job::RenderJob;
use super::protocol::{read_frame, write_frame, Message};
use super::report::BatchReport;
use super::{FarmError, StateCounts};

/// Seconds since the Unix epoch, the time base of a served coordinator.
pub fn wall_clock() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub coordinator: CoordinatorConfig,
    /// Journal file; state is recovered from it on start when present.
    pub journal: Option<PathBuf>,
    /// How often expired leases are reaped.
    pub reap_interval: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            coordinator: CoordinatorConfig::default(),
            journal: None,
            reap_interval: Duration::from_secs(1),
        }
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    coordinator: Arc<Mutex<Coordinator>>,
    stop: Arc<AtomicBool>,
    sessions: Arc<Mutex<Vec<TcpStream>>>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Direct access to the state machine, e.g. for inspection in tests.
    pub fn coordinator(&self) -> Arc<Mutex<Coordinator>> {
        Arc::clone(&self.coordinator)
    }

    /// Stops accepting, closes every session and joins the server threads.
    pub fn shutdown(mut self) {
        self.stop_threads();
    }

    /// Blocks until the server is stopped from another thread.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    fn stop_threads(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        for s in self.sessions.lock().unwrap().drain(..) {
            let _ = s.shutdown(Shutdown::Both);
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if !self.threads.is_empty() {
            self.stop_threads();
        }
    }
}

/// Binds `addr` and serves in background threads.
pub fn serve(addr: impl ToSocketAddrs, config: ServerConfig) -> Result<ServerHandle, FarmError> {
    let now = wall_clock();
    let coordinator = match &config.journal {
        Some(path) => Coordinator::recover(config.coordinator, path, now)?,
        None => Coordinator::new(config.coordinator),
    };
    let coordinator = Arc::new(Mutex::new(coordinator));
    let listener = TcpListener::bind(addr)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let sessions = Arc::new(Mutex::new(Vec::new()));
    log::info!("coordinator listening on {addr}");

    let reaper = {
        let coordinator = Arc::clone(&coordinator);
        let stop = Arc::clone(&stop);
        let interval = config.reap_interval;
        thread::spawn(move || {
            while !stop.load(Ordering::SeqCst) {
                thread::sleep(interval);
                let reaped = coordinator.lock().unwrap().reap_stale(wall_clock());
                match reaped {
                    Ok(jobs) if !jobs.is_empty() => log::info!("requeued {} job(s)", jobs.len()),
                    Ok(_) => {}
                    Err(e) => log::error!("reaping failed: {e}"),
                }
            }
        })
    };

    let acceptor = {
        let coordinator = Arc::clone(&coordinator);
        let stop = Arc::clone(&stop);
        let sessions = Arc::clone(&sessions);
        thread::spawn(move || {
            for conn in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let stream = match conn {
                    Ok(s) => s,
                    Err(e) => {
                        log::warn!("accept failed: {e}");
                        continue;
                    }
                };
                if let Ok(clone) = stream.try_clone() {
                    sessions.lock().unwrap().push(clone);
                }
                let coordinator = Arc::clone(&coordinator);
                thread::spawn(move || {
                    if let Err(e) = session(stream, &coordinator) {
                        log::debug!("session ended: {e}");
                    }
                });
            }
        })
    };

    Ok(ServerHandle {
        addr,
        coordinator,
        stop,
        sessions,
        threads: vec![acceptor, reaper],
    })
}

fn session(mut stream: TcpStream, coordinator: &Mutex<Coordinator>) -> Result<(), FarmError> {
    stream.set_nodelay(true)?;
    while let Some(msg) = read_frame(&mut stream)? {
        let reply = handle(&mut coordinator.lock().unwrap(), msg, wall_clock());
        write_frame(&mut stream, &reply)?;
    }
    Ok(())
}

/// Applies one request to the coordinator and builds the reply.
pub fn handle(coord: &mut Coordinator, msg: Message, now: f64) -> Message {
    let result = match msg {
        Message::Hello { worker_id, capacity } => {
            coord.hello(&worker_id, capacity, now).map(|_| Message::ack())
        }
        Message::Poll { worker_id } => coord.assign(&worker_id, now).map(|jobs| Message::Assign { jobs }),
        Message::Heartbeat { worker_id } => coord.heartbeat(&worker_id, now).map(|_| Message::ack()),
        Message::Complete {
            worker_id,
            job_id,
            status,
            detail,
        } => coord
            .complete(&worker_id, &job_id, status, &detail, now)
            .map(|_| Message::ack()),
        Message::Report { batch_id } => coord.batch_report(&batch_id, now).and_then(|report| {
            Ok(Message::BatchReport {
                counts: coord.counts(&batch_id)?,
                report,
            })
        }),
        Message::Enqueue { jobs } => coord.enqueue_batch(jobs, now).map(|id| Message::Ack {
            batch_id: Some(id),
            warning: None,
        }),
        other => Err(FarmError::Protocol(format!("unexpected request {other:?}"))),
    };
    result.unwrap_or_else(|e| Message::Error {
        message: e.to_string(),
    })
}

/// Synchronous request/response connection to a coordinator.
pub struct Client {
    stream: TcpStream,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, FarmError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self { stream })
    }

    pub fn request(&mut self, msg: &Message) -> Result<Message, FarmError> {
        write_frame(&mut self.stream, msg)?;
        read_frame(&mut self.stream)?
            .ok_or_else(|| FarmError::Protocol("coordinator closed the connection".into()))
    }

    /// Sends a request and turns an ERROR reply into [`FarmError::Remote`].
    pub fn call(&mut self, msg: &Message) -> Result<Message, FarmError> {
        match self.request(msg)? {
            Message::Error { message } => Err(FarmError::Remote(message)),
            reply => Ok(reply),
        }
    }

    pub fn enqueue(&mut self, jobs: Vec<RenderJob>) -> Result<String, FarmError> {
        match self.call(&Message::Enqueue { jobs })? {
            Message::Ack {
                batch_id: Some(id), ..
            } => Ok(id),
            other => Err(unexpected(other)),
        }
    }

    pub fn report(&mut self, batch_id: &str) -> Result<(BatchReport, StateCounts), FarmError> {
        match self.call(&Message::Report {
            batch_id: batch_id.into(),
        })? {
            Message::BatchReport { report, counts } => Ok((report, counts)),
            other => Err(unexpected(other)),
        }
    }
}

pub(crate) fn unexpected(msg: Message) -> FarmError {
    FarmError::Protocol(format!("unexpected reply {msg:?}"))
}
