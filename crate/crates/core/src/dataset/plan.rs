use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClipRecord, DatasetError, Origin, Split, StrataTable};
use crate::farm::RenderJob;
use crate::render::{texture_dir_name, variant_dir};
use crate::texture::{assign_textures, TextureAssignment, TexturePool};

/// Texture counts per patient in the ablation grid; 0 is only-mesh.
pub const ALLOWED_TEXTURE_COUNTS: [usize; 6] = [0, 1, 2, 3, 5, 10];
pub const VIEW_NAMES: [&str; 2] = ["front", "side"];

/// A source clip: one patient's recording, with its mesh sequence and, for
/// real-data manifests, the original video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipSource {
    pub patient_id: String,
    pub clip_id: String,
    pub label: u8,
    pub sequence_uri: String,
    #[serde(default)]
    pub video_uri: Option<String>,
    /// Provided split of the real clip, if any.
    #[serde(default)]
    pub split: Option<Split>,
}

/// Reads a clips CSV with header
/// `patient_id,clip_id,label,sequence_uri[,video_uri][,split]`.
pub fn read_clips(path: &Path) -> Result<Vec<ClipSource>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let clips: Vec<ClipSource> = reader.deserialize().collect::<Result<_, _>>()?;
    let mut seen = HashSet::new();
    for c in &clips {
        if !seen.insert(c.clip_id.as_str()) {
            return Err(DatasetError::DuplicateClip(c.clip_id.clone()));
        }
        if c.label > 1 {
            return Err(DatasetError::InvalidRecord {
                clip: c.clip_id.clone(),
                message: "label must be 0 or 1".into(),
            });
        }
    }
    Ok(clips)
}

/// One condition of the ablation grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationPlan {
    pub textures_per_patient: usize,
    /// Empty for a real-only plan, which renders nothing.
    pub views: Vec<String>,
    pub seed: u64,
}

impl AblationPlan {
    pub fn new(textures_per_patient: usize, views: &[&str], seed: u64) -> Result<Self, DatasetError> {
        let plan = Self {
            textures_per_patient,
            views: views.iter().map(|v| v.to_string()).collect(),
            seed,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if !ALLOWED_TEXTURE_COUNTS.contains(&self.textures_per_patient) {
            return Err(DatasetError::InvalidPlan(format!(
                "textures per patient must be one of {ALLOWED_TEXTURE_COUNTS:?}, got {}",
                self.textures_per_patient
            )));
        }
        let mut seen = HashSet::new();
        for v in &self.views {
            if !VIEW_NAMES.contains(&v.as_str()) {
                return Err(DatasetError::InvalidPlan(format!("unknown view '{v}'")));
            }
            if !seen.insert(v) {
                return Err(DatasetError::InvalidPlan(format!("view '{v}' listed twice")));
            }
        }
        Ok(())
    }

    pub fn is_real_only(&self) -> bool {
        self.views.is_empty()
    }

    /// Seeded per-patient texture draw for this plan.
    pub fn assign(&self, patients: &[String], pool: &TexturePool) -> Result<Vec<TextureAssignment>, DatasetError> {
        assign_textures(patients, &pool.ids(), self.textures_per_patient, self.seed)
            .map_err(|e| DatasetError::InvalidPlan(e.to_string()))
    }
}

/// `clips * max(1, n) * views`.
pub fn count_jobs(clips: usize, textures_per_patient: usize, views: usize) -> usize {
    clips * textures_per_patient.max(1) * views
}

/// Expands the plan into render jobs, ordered by clip, then texture, then
/// view. Every job writes under `out_root`.
pub fn plan_jobs(
    clips: &[ClipSource],
    assignments: &[TextureAssignment],
    plan: &AblationPlan,
    pool: &TexturePool,
    out_root: &str,
) -> Result<Vec<RenderJob>, DatasetError> {
    plan.validate()?;
    let by_patient: HashMap<&str, &TextureAssignment> =
        assignments.iter().map(|a| (a.patient_id.as_str(), a)).collect();
    let mut seen = HashSet::new();
    let n = plan.textures_per_patient;
    let mut jobs = Vec::with_capacity(count_jobs(clips.len(), n, plan.views.len()));
    for clip in clips {
        if !seen.insert(clip.clip_id.as_str()) {
            return Err(DatasetError::DuplicateClip(clip.clip_id.clone()));
        }
        let textures: Vec<Option<&str>> = if n == 0 {
            vec![None]
        } else {
            let a = by_patient
                .get(clip.patient_id.as_str())
                .ok_or_else(|| DatasetError::MissingAssignment(clip.patient_id.clone()))?;
            if a.texture_ids.len() != n {
                return Err(DatasetError::InvalidPlan(format!(
                    "patient '{}' has {} textures, plan wants {n}",
                    clip.patient_id,
                    a.texture_ids.len()
                )));
            }
            a.texture_ids.iter().map(|t| Some(t.as_str())).collect()
        };
        for texture in textures {
            let texture_uri = match texture {
                None => None,
                Some(t) => {
                    let entry = pool.get(t).ok_or_else(|| DatasetError::UnknownTexture {
                        patient: clip.patient_id.clone(),
                        texture: t.into(),
                    })?;
                    Some(entry.path.to_string_lossy().into_owned())
                }
            };
            for view in &plan.views {
                jobs.push(RenderJob {
                    job_id: format!("{}.{}.{}", clip.clip_id, view, texture_dir_name(texture)),
                    patient_id: clip.patient_id.clone(),
                    clip_id: clip.clip_id.clone(),
                    texture_id: texture.map(String::from),
                    view_name: view.clone(),
                    sequence_uri: clip.sequence_uri.clone(),
                    texture_uri: texture_uri.clone(),
                    output_uri: out_root.into(),
                    attempt: 0,
                });
            }
        }
    }
    Ok(jobs)
}

/// Records for the real clips. Each needs a `video_uri`; the provided split
/// is not part of the record and is applied when the manifest is built.
pub fn real_records(clips: &[ClipSource], strata: &StrataTable) -> Result<Vec<ClipRecord>, DatasetError> {
    clips
        .iter()
        .map(|c| {
            let uri = c.video_uri.clone().ok_or_else(|| DatasetError::InvalidRecord {
                clip: c.clip_id.clone(),
                message: "real clip has no video_uri".into(),
            })?;
            Ok(ClipRecord {
                clip_id: c.clip_id.clone(),
                patient_id: c.patient_id.clone(),
                origin: Origin::Real,
                label: c.label,
                texture_id: None,
                view_name: None,
                uri,
                strata: strata.get(&c.patient_id)?.clone(),
            })
        })
        .collect()
}

/// Records for rendered jobs; each inherits the label of its source clip
/// and the strata of its patient, and points at the rendered frame directory.
pub fn synthetic_records(
    jobs: &[RenderJob],
    clips: &[ClipSource],
    strata: &StrataTable,
) -> Result<Vec<ClipRecord>, DatasetError> {
    let labels: HashMap<&str, u8> = clips.iter().map(|c| (c.clip_id.as_str(), c.label)).collect();
    jobs.iter()
        .map(|j| {
            let label = *labels.get(j.clip_id.as_str()).ok_or_else(|| DatasetError::InvalidRecord {
                clip: j.job_id.clone(),
                message: format!("unknown source clip '{}'", j.clip_id),
            })?;
            let uri = variant_dir(Path::new(&j.output_uri), &j.clip_id, &j.view_name, j.texture_id.as_deref());
            Ok(ClipRecord {
                clip_id: j.job_id.clone(),
                patient_id: j.patient_id.clone(),
                origin: Origin::Synthetic,
                label,
                texture_id: j.texture_id.clone(),
                view_name: Some(j.view_name.clone()),
                uri: uri.to_string_lossy().into_owned(),
                strata: strata.get(&j.patient_id)?.clone(),
            })
        })
        .collect()
}
