// Runs the farm coordinator in virtual time: how a batch scales with
// workers, and what failures, a crashed worker and a coordinator restart
// cost. Nothing sleeps, so hours of farm time take milliseconds.
//
// ```text
// cargo run --example farm_simulation
// ```

use std::error::Error;

use headforge::farm::sim::{simulate, SimConfig};

pub fn run() -> Result<(), Box<dyn Error>> {
    println!("workers  wall(s)  jobs/min");
    for workers in [1, 2, 4, 8] {
        let out = simulate(&SimConfig::new(200, workers, 1.0))?;
        println!("{workers:>7}  {:>7.1}  {:>8.1}", out.report.wall_time, out.report.throughput);
    }

    let journal = std::env::temp_dir().join(format!("headforge-sim-{}.journal", std::process::id()));
    let _ = std::fs::remove_file(&journal);
    let mut cfg = SimConfig::new(300, 6, 30.0);
    cfg.capacity = 2;
    cfg.failure_rate = 0.15;
    cfg.kills = vec![(2, 200.0)];
    cfg.coordinator_restarts = vec![450.0];
    cfg.journal = Some(journal.clone());
    let out = simulate(&cfg)?;
    let r = &out.report;
    println!(
        "\nfaulty run: {} done, {} failed for good, {} retries, {} lease requeues, {} stale completions",
        r.completed, r.failed_permanently, r.retried, out.lease_requeues, out.rejected_completions
    );
    println!("wall {:.0} s, {:.1} jobs/min", r.wall_time, r.throughput);
    if let Some(slot) = r.mean_slot_time {
        println!("mean slot time per job: {slot:.1} s");
    }
    assert!(out.outputs_written.values().all(|&n| n <= 1));
    std::fs::remove_file(journal)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
