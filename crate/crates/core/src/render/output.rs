use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use image::{ExtendedColorType, ImageFormat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::camera::Camera;
use super::raster::{rasterize_frame, RenderSettings};
use super::RenderError;
use crate::mesh::MeshSequence;
use crate::texture::{TextureAssignment, TextureAtlas, TextureError, TexturePool};

/// Directory name used in place of a texture id for only-mesh renders.
pub const ONLY_MESH_DIR: &str = "none";
const META_FILE: &str = "clip.json";

/// Resolves texture ids to atlases.
pub trait AtlasSource: Sync {
    fn atlas(&self, texture_id: &str) -> Result<Arc<TextureAtlas>, TextureError>;
}

impl AtlasSource for TexturePool {
    fn atlas(&self, texture_id: &str) -> Result<Arc<TextureAtlas>, TextureError> {
        self.load(texture_id).map(Arc::new)
    }
}

impl AtlasSource for HashMap<String, Arc<TextureAtlas>> {
    fn atlas(&self, texture_id: &str) -> Result<Arc<TextureAtlas>, TextureError> {
        self.get(texture_id)
            .cloned()
            .ok_or_else(|| TextureError::UnknownId(texture_id.into()))
    }
}

/// Metadata written next to the frames of one rendered clip variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipMeta {
    pub clip_id: String,
    pub patient_id: String,
    pub view_name: String,
    pub texture_id: Option<String>,
    pub frame_count: usize,
    pub frame_rate: f64,
    pub duration_s: f64,
    pub camera: Camera,
    pub frames_dir: PathBuf,
}

pub fn texture_dir_name(texture_id: Option<&str>) -> &str {
    texture_id.unwrap_or(ONLY_MESH_DIR)
}

/// `<out>/<clip>/<view>/<texture|none>`
pub fn variant_dir(out_root: &Path, clip_id: &str, view_name: &str, texture_id: Option<&str>) -> PathBuf {
    out_root
        .join(clip_id)
        .join(view_name)
        .join(texture_dir_name(texture_id))
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn write_err(path: &Path, e: impl std::fmt::Display) -> RenderError {
    RenderError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Renders every frame of `seq` with one texture (or none) from one camera
/// into `<out>/<clip>/<view>/<texture>/frame_NNNN.png` plus `clip.json`.
///
/// Frames are written to a temporary sibling directory that is renamed into
/// place at the end. If the final directory already exists its metadata is
/// returned untouched, so re-running a finished variant is a no-op.
pub fn render_variant(
    seq: &MeshSequence,
    atlas: Option<&TextureAtlas>,
    camera: &Camera,
    settings: &RenderSettings,
    out_root: &Path,
) -> Result<ClipMeta, RenderError> {
    camera.validate()?;
    let texture_id = atlas.map(|a| a.texture_id.as_str());
    let final_dir = variant_dir(out_root, &seq.clip_id, &camera.view_name, texture_id);
    if let Some(meta) = read_meta(&final_dir)? {
        return Ok(meta);
    }
    let parent = final_dir.parent().expect("variant dir has a parent");
    std::fs::create_dir_all(parent).map_err(|e| write_err(parent, e))?;
    let tmp = parent.join(format!(
        ".{}.tmp-{}-{}",
        texture_dir_name(texture_id),
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::create_dir_all(&tmp).map_err(|e| write_err(&tmp, e))?;

    let result = (|| {
        seq.frames()
            .par_iter()
            .enumerate()
            .try_for_each(|(i, frame)| {
                let fb = rasterize_frame(frame, atlas, camera, settings);
                let path = tmp.join(format!("frame_{i:04}.png"));
                image::save_buffer_with_format(
                    &path,
                    &fb.to_rgb8(),
                    fb.width(),
                    fb.height(),
                    ExtendedColorType::Rgb8,
                    ImageFormat::Png,
                )
                .map_err(|e| write_err(&path, e))
            })?;
        let meta = ClipMeta {
            clip_id: seq.clip_id.clone(),
            patient_id: seq.patient_id.clone(),
            view_name: camera.view_name.clone(),
            texture_id: texture_id.map(String::from),
            frame_count: seq.len(),
            frame_rate: seq.frame_rate,
            duration_s: seq.duration(),
            camera: camera.clone(),
            frames_dir: final_dir.clone(),
        };
        let json = serde_json::to_vec_pretty(&meta).expect("metadata serializes");
        let meta_path = tmp.join(META_FILE);
        std::fs::write(&meta_path, json).map_err(|e| write_err(&meta_path, e))?;
        Ok::<_, RenderError>(meta)
    })();

    let meta = match result {
        Ok(meta) => meta,
        Err(e) => {
            let _ = std::fs::remove_dir_all(&tmp);
            return Err(e);
        }
    };
    match std::fs::rename(&tmp, &final_dir) {
        Ok(()) => Ok(meta),
        Err(e) => {
            let _ = std::fs::remove_dir_all(&tmp);
            // lost a race against another renderer of the same variant
            match read_meta(&final_dir)? {
                Some(existing) => Ok(existing),
                None => Err(write_err(&final_dir, e)),
            }
        }
    }
}

fn read_meta(dir: &Path) -> Result<Option<ClipMeta>, RenderError> {
    let path = dir.join(META_FILE);
    match std::fs::read(&path) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| write_err(&path, e)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Renders every (texture, camera) combination of one assignment. An empty
/// texture list renders the only-mesh variant. All atlases are resolved
/// before any file is written.
pub fn render_sequence(
    seq: &MeshSequence,
    assignment: &TextureAssignment,
    cameras: &[Camera],
    settings: &RenderSettings,
    atlases: &dyn AtlasSource,
    out_root: &Path,
) -> Result<Vec<ClipMeta>, RenderError> {
    let resolved: Vec<Option<Arc<TextureAtlas>>> = if assignment.texture_ids.is_empty() {
        vec![None]
    } else {
        assignment
            .texture_ids
            .iter()
            .map(|id| atlases.atlas(id).map(Some))
            .collect::<Result<_, _>>()?
    };
    for cam in cameras {
        cam.validate()?;
    }
    let mut metas = Vec::with_capacity(resolved.len() * cameras.len());
    for atlas in &resolved {
        for cam in cameras {
            metas.push(render_variant(seq, atlas.as_deref(), cam, settings, out_root)?);
        }
    }
    Ok(metas)
}
