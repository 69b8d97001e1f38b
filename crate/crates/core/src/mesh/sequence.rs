use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{parse_obj, MeshError, MeshFrame};

pub const DEFAULT_FRAME_RATE: f64 = 25.0;

/// An animated head: frames share triangles and UVs, positions vary.
#[derive(Debug, Clone)]
pub struct MeshSequence {
    frames: Vec<MeshFrame>,
    frame_indices: Vec<u64>,
    pub frame_rate: f64,
    pub patient_id: String,
    pub clip_id: String,
}

impl MeshSequence {
    /// Builds a sequence from in-memory frames, numbered from 0.
    pub fn new(
        frames: Vec<MeshFrame>,
        frame_rate: f64,
        patient_id: impl Into<String>,
        clip_id: impl Into<String>,
    ) -> Result<Self, MeshError> {
        let indices = (0..frames.len() as u64).collect();
        Self::from_indexed(frames, indices, frame_rate, patient_id.into(), clip_id.into())
    }

    fn from_indexed(
        frames: Vec<MeshFrame>,
        frame_indices: Vec<u64>,
        frame_rate: f64,
        patient_id: String,
        clip_id: String,
    ) -> Result<Self, MeshError> {
        let first = frames
            .first()
            .ok_or_else(|| MeshError::NoFrames(clip_id.clone()))?;
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(MeshError::Invalid(format!("frame rate {frame_rate}")));
        }
        for (frame, &index) in frames.iter().zip(&frame_indices).skip(1) {
            first
                .same_topology(frame)
                .map_err(|reason| MeshError::TopologyMismatch { frame: index, reason })?;
        }
        Ok(Self {
            frames,
            frame_indices,
            frame_rate,
            patient_id,
            clip_id,
        })
    }

    pub fn frames(&self) -> &[MeshFrame] {
        &self.frames
    }

    /// Frame numbers as parsed from the file names.
    pub fn frame_indices(&self) -> &[u64] {
        &self.frame_indices
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Clip length in seconds.
    pub fn duration(&self) -> f64 {
        self.frames.len() as f64 / self.frame_rate
    }
}

/// Extracts the last run of ASCII digits in a file stem, e.g. `head_0012.obj` -> 12.
pub fn frame_index_of(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let end = stem.rfind(|c: char| c.is_ascii_digit())? + 1;
    let start = stem[..end]
        .rfind(|c: char| !c.is_ascii_digit())
        .map_or(0, |i| i + 1);
    stem[start..end].parse().ok()
}

pub fn load_sequence(dir: &Path, patient_id: &str, clip_id: &str) -> Result<MeshSequence, MeshError> {
    load_sequence_with_rate(dir, patient_id, clip_id, DEFAULT_FRAME_RATE)
}

/// Loads every `*.obj` in `dir`, ordered by the numeric frame index in the
/// file name. Directory listing order does not matter.
pub fn load_sequence_with_rate(
    dir: &Path,
    patient_id: &str,
    clip_id: &str,
    frame_rate: f64,
) -> Result<MeshSequence, MeshError> {
    let mut by_index: BTreeMap<u64, PathBuf> = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let is_obj = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("obj"));
        if !is_obj || !path.is_file() {
            continue;
        }
        let Some(index) = frame_index_of(&path) else {
            log::warn!("skipping {}: no frame index in file name", path.display());
            continue;
        };
        if by_index.insert(index, path).is_some() {
            return Err(MeshError::DuplicateFrame(index));
        }
    }

    let (&lo, &hi) = match (by_index.keys().next(), by_index.keys().next_back()) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => return Err(MeshError::NoFrames(dir.display().to_string())),
    };
    let gaps: Vec<u64> = (lo..=hi).filter(|i| !by_index.contains_key(i)).collect();
    if !gaps.is_empty() {
        return Err(MeshError::MissingFrames(gaps));
    }

    let entries: Vec<(u64, PathBuf)> = by_index.into_iter().collect();
    let frames = entries
        .par_iter()
        .map(|(index, path)| {
            let bytes = std::fs::read(path)?;
            parse_obj(&bytes)
                .map(|p| p.frame)
                .map_err(|e| MeshError::Frame {
                    frame: *index,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>, MeshError>>()?;
    let indices = entries.iter().map(|(i, _)| *i).collect();
    MeshSequence::from_indexed(frames, indices, frame_rate, patient_id.into(), clip_id.into())
}
