//! Dataset manifests for the real, synthetic and mixed training regimes,
//! ablation job planning, stratified patient-level splits and leakage checks.

mod leakage;
mod manifest;
mod plan;
mod split;
mod strata;

pub use leakage::{verify_leakage, LeakageFinding, LeakageReport};
pub use manifest::{build_manifest, read_manifest, write_manifest, Manifest, ManifestHeader};
pub use plan::{
    count_jobs, plan_jobs, read_clips, real_records, synthetic_records, AblationPlan, ClipSource,
    ALLOWED_TEXTURE_COUNTS, VIEW_NAMES,
};
pub use split::{
    max_deviation, stratum_deviations, stratified_split, SplitOptions, SplitOutcome,
    StratumDeviation, DEFAULT_TOLERANCE,
};
pub use strata::{age_bucket, read_strata, StrataRow, StrataTable, STRATA_KEYS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("duplicate clip_id '{0}'")]
    DuplicateClip(String),
    #[error("patient '{patient}' is assigned unknown texture '{texture}'")]
    UnknownTexture { patient: String, texture: String },
    #[error("no texture assignment for patient '{0}'")]
    MissingAssignment(String),
    #[error("invalid ablation plan: {0}")]
    InvalidPlan(String),
    #[error("invalid record '{clip}': {message}")]
    InvalidRecord { clip: String, message: String },
    #[error("no strata for patient '{0}'")]
    MissingStrata(String),
    #[error("invalid source: {0}")]
    InvalidSource(String),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("split: {0}")]
    Split(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Real,
    Synth,
    Mixed,
}

impl std::str::FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(Regime::Real),
            "synth" => Ok(Regime::Synth),
            "mixed" => Ok(Regime::Mixed),
            _ => Err(format!("unknown regime '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Strata {
    pub gender: String,
    pub age_bucket: String,
    pub expressiveness: String,
}

impl Strata {
    /// Value of one of [`STRATA_KEYS`].
    pub fn get(&self, key: &str) -> Option<&str> {
        match key {
            "gender" => Some(&self.gender),
            "age_bucket" | "age" => Some(&self.age_bucket),
            "expressiveness" => Some(&self.expressiveness),
            _ => None,
        }
    }
}

/// One real or rendered clip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub patient_id: String,
    pub origin: Origin,
    /// 1 for the pain stimulus, 0 for baseline.
    pub label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texture_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view_name: Option<String>,
    pub uri: String,
    pub strata: Strata,
}

impl ClipRecord {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |message: &str| {
            Err(DatasetError::InvalidRecord {
                clip: self.clip_id.clone(),
                message: message.into(),
            })
        };
        if self.clip_id.is_empty() || self.patient_id.is_empty() || self.uri.is_empty() {
            return bad("empty clip_id, patient_id or uri");
        }
        if self.label > 1 {
            return bad("label must be 0 or 1");
        }
        match self.origin {
            Origin::Real if self.texture_id.is_some() || self.view_name.is_some() => {
                bad("real clips carry no texture or view")
            }
            Origin::Synthetic if self.view_name.is_none() => bad("synthetic clips need a view"),
            _ => Ok(()),
        }
    }
}
