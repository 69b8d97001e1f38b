//! UV texture atlases: loading, bilinear sampling, texture pools and the
//! per-patient texture assignment used by the textures-per-patient ablation.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use image::RgbaImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextureError {
    #[error("cannot read texture {path}: {message}")]
    Ingest { path: String, message: String },
    #[error("invalid atlas: {0}")]
    Invalid(String),
    #[error("requested {requested} textures per patient but the pool holds {available}")]
    Capacity { requested: usize, available: usize },
    #[error("duplicate texture id '{0}'")]
    DuplicateId(String),
    #[error("pool manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("unknown texture id '{0}'")]
    UnknownId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A row-major 8-bit RGB texture in the mesh's UV parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureAtlas {
    pub texture_id: String,
    width: u32,
    height: u32,
    pixels: Vec<u8>,
    pub demographic_tags: Vec<String>,
}

impl TextureAtlas {
    pub fn new(
        texture_id: impl Into<String>,
        width: u32,
        height: u32,
        pixels: Vec<u8>,
    ) -> Result<Self, TextureError> {
        if width == 0 || height == 0 {
            return Err(TextureError::Invalid(format!("size {width}x{height}")));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(TextureError::Invalid(format!(
                "pixel buffer has {} bytes, expected {expected}",
                pixels.len()
            )));
        }
        Ok(Self {
            texture_id: texture_id.into(),
            width,
            height,
            pixels,
            demographic_tags: Vec::new(),
        })
    }

    /// A 1x1 atlas of one color.
    pub fn solid(texture_id: impl Into<String>, rgb: [u8; 3]) -> Self {
        Self::new(texture_id, 1, 1, rgb.to_vec()).expect("1x1 atlas is valid")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn texel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Alpha-composites a pre-authored overlay (e.g. an eye-region fix) on top
    /// of the atlas. The overlay is resampled nearest-neighbour if its size
    /// differs.
    pub fn apply_overlay(&mut self, overlay: &RgbaImage) {
        let (ow, oh) = overlay.dimensions();
        if ow == 0 || oh == 0 {
            return;
        }
        for y in 0..self.height {
            let oy = (u64::from(y) * u64::from(oh) / u64::from(self.height)) as u32;
            for x in 0..self.width {
                let ox = (u64::from(x) * u64::from(ow) / u64::from(self.width)) as u32;
                let px = overlay.get_pixel(ox, oy).0;
                let alpha = u32::from(px[3]);
                if alpha == 0 {
                    continue;
                }
                let i = (y as usize * self.width as usize + x as usize) * 3;
                for (dst, &top) in self.pixels[i..i + 3].iter_mut().zip(&px[..3]) {
                    let (base, top) = (u32::from(*dst), u32::from(top));
                    *dst = ((top * alpha + base * (255 - alpha) + 127) / 255) as u8;
                }
            }
        }
    }
}

/// Loads a PNG (RGB, RGBA or grayscale) as an RGB atlas. Alpha is dropped and
/// gray channels are triplicated.
pub fn load_texture(path: &Path, texture_id: &str) -> Result<TextureAtlas, TextureError> {
    let ingest = |message: String| TextureError::Ingest {
        path: path.display().to_string(),
        message,
    };
    let img = image::open(path).map_err(|e| ingest(e.to_string()))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    if w == 0 || h == 0 {
        return Err(ingest("zero-size image".into()));
    }
    TextureAtlas::new(texture_id, w, h, rgb.into_raw())
}

/// Like [`load_texture`], then composites an optional RGBA overlay mask.
pub fn load_texture_with_overlay(
    path: &Path,
    texture_id: &str,
    overlay: Option<&Path>,
) -> Result<TextureAtlas, TextureError> {
    let mut atlas = load_texture(path, texture_id)?;
    if let Some(mask) = overlay {
        let img = image::open(mask).map_err(|e| TextureError::Ingest {
            path: mask.display().to_string(),
            message: e.to_string(),
        })?;
        atlas.apply_overlay(&img.to_rgba8());
    }
    Ok(atlas)
}

/// Bilinear lookup with repeat wrapping. Texel `(i, j)` has its center at
/// `u = (i + 0.5) / width`, `v = 1 - (j + 0.5) / height`; `v` grows upward
/// from the bottom image row as in OBJ texture coordinates.
pub fn sample_bilinear(atlas: &TextureAtlas, uv: [f32; 2]) -> [f32; 3] {
    let w = atlas.width as i64;
    let h = atlas.height as i64;
    let u = fract(f64::from(uv[0]));
    let v = fract(f64::from(uv[1]));
    let x = u * w as f64 - 0.5;
    let y = (1.0 - v) * h as f64 - 0.5;
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let xs = [(x0 as i64).rem_euclid(w), (x0 as i64 + 1).rem_euclid(w)];
    let ys = [(y0 as i64).rem_euclid(h), (y0 as i64 + 1).rem_euclid(h)];

    let mut out = [0f32; 3];
    for (c, slot) in out.iter_mut().enumerate() {
        let t = |xi: usize, yi: usize| {
            let i = (ys[yi] as usize * w as usize + xs[xi] as usize) * 3 + c;
            f64::from(atlas.pixels[i]) / 255.0
        };
        let top = t(0, 0) * (1.0 - fx) + t(1, 0) * fx;
        let bottom = t(0, 1) * (1.0 - fx) + t(1, 1) * fx;
        *slot = (top * (1.0 - fy) + bottom * fy) as f32;
    }
    out
}

fn fract(x: f64) -> f64 {
    x - x.floor()
}

/// The textures one patient is rendered with. Empty means only-mesh.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextureAssignment {
    pub patient_id: String,
    pub texture_ids: Vec<String>,
    pub seed: u64,
}

impl TextureAssignment {
    pub fn is_only_mesh(&self) -> bool {
        self.texture_ids.is_empty()
    }
}

/// Gives every patient `n` distinct textures drawn from a seeded shuffle of
/// the pool. Each patient's shuffle is independent, so patients may share
/// textures. The result depends only on the arguments.
pub fn assign_textures(
    patients: &[String],
    pool: &[String],
    n: usize,
    seed: u64,
) -> Result<Vec<TextureAssignment>, TextureError> {
    if n > pool.len() {
        return Err(TextureError::Capacity {
            requested: n,
            available: pool.len(),
        });
    }
    let mut seen = HashSet::new();
    if let Some(dup) = pool.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(TextureError::DuplicateId(dup.clone()));
    }
    Ok(patients
        .iter()
        .map(|patient| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(patient.as_bytes()));
            let mut order: Vec<&String> = pool.iter().collect();
            shuffle(&mut order, &mut rng);
            TextureAssignment {
                patient_id: patient.clone(),
                texture_ids: order.into_iter().take(n).cloned().collect(),
                seed,
            }
        })
        .collect())
}

/// Fisher-Yates drawing u64s so the stream is word-size independent.
pub(crate) fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i as u64) as usize;
        items.swap(i, j);
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// A texture id and either its `(width, height)` or why it failed to load.
pub type PoolCheck = (String, Result<(u32, u32), TextureError>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolEntry {
    pub texture_id: String,
    pub path: PathBuf,
    pub tags: Vec<String>,
}

/// A texture pool manifest: one texture per line, `id<TAB>path[<TAB>tag]...`.
/// Relative paths resolve against the manifest's directory; `#` starts a comment line.
#[derive(Debug, Clone, Default)]
pub struct TexturePool {
    entries: Vec<PoolEntry>,
}

impl TexturePool {
    pub fn from_entries(entries: Vec<PoolEntry>) -> Result<Self, TextureError> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.texture_id.as_str()) {
                return Err(TextureError::DuplicateId(e.texture_id.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, TextureError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let id = cols.next().unwrap_or_default().trim();
            let path = cols.next().map(str::trim).unwrap_or_default();
            if id.is_empty() || path.is_empty() {
                return Err(TextureError::Manifest {
                    line: i + 1,
                    message: "expected 'id<TAB>path'".into(),
                });
            }
            let tags = cols
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(String::from)
                .collect();
            entries.push(PoolEntry {
                texture_id: id.to_string(),
                path: base_dir.join(path),
                tags,
            });
        }
        Self::from_entries(entries)
    }

    pub fn open(manifest: &Path) -> Result<Self, TextureError> {
        let text = std::fs::read_to_string(manifest)?;
        Self::parse(&text, manifest.parent().unwrap_or(Path::new(".")))
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.texture_id.clone()).collect()
    }

    pub fn get(&self, texture_id: &str) -> Option<&PoolEntry> {
        self.entries.iter().find(|e| e.texture_id == texture_id)
    }

    pub fn load(&self, texture_id: &str) -> Result<TextureAtlas, TextureError> {
        let entry = self
            .get(texture_id)
            .ok_or_else(|| TextureError::UnknownId(texture_id.into()))?;
        let mut atlas = load_texture(&entry.path, texture_id)?;
        atlas.demographic_tags = entry.tags.clone();
        Ok(atlas)
    }

    /// Loads every entry, returning one result per texture in manifest order.
    pub fn check(&self) -> Vec<PoolCheck> {
        self.entries
            .iter()
            .map(|e| {
                let res = self.load(&e.texture_id).map(|a| (a.width(), a.height()));
                (e.texture_id.clone(), res)
            })
            .collect()
    }
}
