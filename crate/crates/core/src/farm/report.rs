use serde::{Deserialize, Serialize};

/// Progress and throughput of one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub batch_id: String,
    pub total_jobs: usize,
    pub completed: usize,
    pub failed_permanently: usize,
    /// Failed attempts that were put back in the queue.
    pub retried: u64,
    pub pending: usize,
    pub running: usize,
    /// Seconds from enqueue to the last terminal transition, or to now while
    /// the batch is still open.
    pub wall_time: f64,
    /// Completed jobs per minute of wall time.
    pub throughput: f64,
    /// Parallel job slots (sum of worker capacities).
    pub slots: usize,
    /// `wall_time * slots / completed`: the mean time one slot spent per
    /// completed job, in seconds.
    pub mean_slot_time: Option<f64>,
    /// Measured mean seconds from assignment to completion.
    pub mean_service_time: Option<f64>,
}

impl BatchReport {
    /// Builds a report from aggregate figures alone.
    pub fn from_totals(
        batch_id: impl Into<String>,
        total_jobs: usize,
        completed: usize,
        failed_permanently: usize,
        retried: u64,
        wall_time: f64,
        slots: usize,
    ) -> Self {
        Self {
            batch_id: batch_id.into(),
            total_jobs,
            completed,
            failed_permanently,
            retried,
            pending: total_jobs.saturating_sub(completed + failed_permanently),
            running: 0,
            wall_time,
            throughput: throughput_per_minute(completed, wall_time),
            slots,
            mean_slot_time: mean_slot_time(wall_time, slots, completed),
            mean_service_time: None,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.completed + self.failed_permanently == self.total_jobs
    }
}

pub fn throughput_per_minute(completed: usize, wall_time_s: f64) -> f64 {
    if completed == 0 || wall_time_s <= 0.0 {
        0.0
    } else {
        completed as f64 / (wall_time_s / 60.0)
    }
}

pub fn mean_slot_time(wall_time_s: f64, slots: usize, completed: usize) -> Option<f64> {
    (completed > 0).then(|| wall_time_s * slots as f64 / completed as f64)
}
