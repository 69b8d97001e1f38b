use serde::{Deserialize, Serialize};

/// One rendering unit: a clip of one patient, with one texture (or none),
/// from one view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderJob {
    pub job_id: String,
    pub patient_id: String,
    pub clip_id: String,
    #[serde(default)]
    pub texture_id: Option<String>,
    pub view_name: String,
    pub sequence_uri: String,
    #[serde(default)]
    pub texture_uri: Option<String>,
    pub output_uri: String,
    #[serde(default)]
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobState {
    Pending,
    Running { worker_id: String },
    Completed,
    FailedPermanent,
}

impl JobState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, JobState::Completed | JobState::FailedPermanent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompletionStatus {
    Done,
    Fail,
}

/// Number of jobs of a batch in each state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StateCounts {
    pub pending: usize,
    pub running: usize,
    pub completed: usize,
    pub failed_permanent: usize,
}

impl StateCounts {
    pub fn total(&self) -> usize {
        self.pending + self.running + self.completed + self.failed_permanent
    }

    pub fn finished(&self) -> usize {
        self.completed + self.failed_permanent
    }
}
