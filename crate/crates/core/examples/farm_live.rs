// A coordinator and three workers talking over localhost TCP. Workers run
// a simulated executor that sleeps and writes a marker file per job; one
// worker is killed halfway and its jobs are reclaimed when its lease
// expires.
//
// ```text
// RUST_LOG=info cargo run --example farm_live
// ```

use std::error::Error;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use headforge::farm::server::{serve, Client, ServerConfig};
use headforge::farm::sim::sim_job;
use headforge::farm::worker::{spawn_worker, SimulatedExecutor, WorkerConfig};
use headforge::farm::{CoordinatorConfig, RenderJob};

pub fn run() -> Result<(), Box<dyn Error>> {
    let out = std::env::temp_dir().join(format!("headforge-farm-{}", std::process::id()));
    let server = serve(
        "127.0.0.1:0",
        ServerConfig {
            coordinator: CoordinatorConfig { lease_timeout: 0.5, max_retries: 3 },
            journal: Some(out.with_extension("journal")),
            reap_interval: Duration::from_millis(100),
        },
    )?;
    let jobs: Vec<RenderJob> = (0..30)
        .map(|i| RenderJob { output_uri: out.join(format!("{i}.done")).display().to_string(), ..sim_job(i) })
        .collect();
    let batch = Client::connect(server.addr())?.enqueue(jobs)?;

    let exec = Arc::new(SimulatedExecutor::new(Duration::from_millis(40), 0.1, 5));
    let config = |id: &str| WorkerConfig {
        poll_interval: Duration::from_millis(20),
        heartbeat_interval: Duration::from_millis(100),
        ..WorkerConfig::new(id, 2)
    };
    let mut workers: Vec<_> = ["a", "b", "c"].iter().map(|id| spawn_worker(server.addr(), config(id), exec.clone())).collect();

    let mut client = Client::connect(server.addr())?;
    let start = Instant::now();
    let mut killed = false;
    let report = loop {
        let (report, counts) = client.report(&batch)?;
        if !killed && counts.completed >= 10 {
            println!("killing worker c with {} job(s) running", counts.running);
            workers.pop().expect("three workers").kill();
            killed = true;
        }
        if report.is_finished() {
            break report;
        }
        if start.elapsed() > Duration::from_secs(60) {
            return Err("batch did not finish".into());
        }
        thread::sleep(Duration::from_millis(50));
    };
    for w in workers {
        println!("{:?}", w.stop()?);
    }
    println!(
        "{} done, {} failed, {} retries, {:.2} s wall",
        report.completed, report.failed_permanently, report.retried, report.wall_time
    );
    server.shutdown();
    std::fs::remove_dir_all(&out)?;
    std::fs::remove_file(out.with_extension("journal"))?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    env_logger::init();
    run()
}
