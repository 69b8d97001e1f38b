//! Per-frame head meshes and mesh sequences.
//!
//! A [`MeshFrame`] is one triangulated surface with UV coordinates and
//! optional normals. A [`MeshSequence`] is an ordered run of frames that
//! share topology and UV layout; only vertex positions animate.

mod obj;
mod sequence;

pub use obj::{parse_obj, serialize_obj, ObjParse};
pub use sequence::{frame_index_of, load_sequence, load_sequence_with_rate, MeshSequence, DEFAULT_FRAME_RATE};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: face index {index} out of range ({kind} count is {count})")]
    IndexOutOfRange {
        line: usize,
        kind: &'static str,
        index: i64,
        count: usize,
    },
    #[error("mesh has no faces")]
    Empty,
    #[error("input is not valid UTF-8")]
    Encoding,
    #[error("invalid mesh: {0}")]
    Invalid(String),
    #[error("missing frame indices {0:?}")]
    MissingFrames(Vec<u64>),
    #[error("frame {frame}: topology mismatch ({reason})")]
    TopologyMismatch { frame: u64, reason: String },
    #[error("frame {frame}: {source}")]
    Frame {
        frame: u64,
        #[source]
        source: Box<MeshError>,
    },
    #[error("no mesh frames found in {0}")]
    NoFrames(String),
    #[error("duplicate frame index {0}")]
    DuplicateFrame(u64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One triangle corner: a vertex index plus optional UV and normal indices,
/// all zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Corner {
    pub vertex: usize,
    pub uv: Option<usize>,
    pub normal: Option<usize>,
}

impl Corner {
    pub fn new(vertex: usize, uv: Option<usize>, normal: Option<usize>) -> Self {
        Self { vertex, uv, normal }
    }
}

pub type Triangle = [Corner; 3];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeshFrame {
    pub vertices: Vec<[f32; 3]>,
    pub uvs: Vec<[f32; 2]>,
    pub normals: Option<Vec<[f32; 3]>>,
    pub triangles: Vec<Triangle>,
}

impl MeshFrame {
    /// Checks index ranges, the UV domain and normal lengths.
    pub fn validate(&self) -> Result<(), MeshError> {
        let normal_count = self.normals.as_ref().map_or(0, Vec::len);
        for (t, tri) in self.triangles.iter().enumerate() {
            for c in tri {
                if c.vertex >= self.vertices.len() {
                    return Err(MeshError::Invalid(format!(
                        "triangle {t}: vertex index {} out of range",
                        c.vertex
                    )));
                }
                if matches!(c.uv, Some(i) if i >= self.uvs.len()) {
                    return Err(MeshError::Invalid(format!("triangle {t}: uv index out of range")));
                }
                if matches!(c.normal, Some(i) if i >= normal_count) {
                    return Err(MeshError::Invalid(format!(
                        "triangle {t}: normal index out of range"
                    )));
                }
            }
        }
        if let Some(bad) = self
            .uvs
            .iter()
            .position(|uv| uv.iter().any(|c| !(0.0..=1.0).contains(c)))
        {
            return Err(MeshError::Invalid(format!("uv {bad} outside [0,1]")));
        }
        if let Some(normals) = &self.normals {
            for (i, n) in normals.iter().enumerate() {
                let len = length(n);
                if (len - 1.0).abs() > 1e-3 {
                    return Err(MeshError::Invalid(format!("normal {i} has length {len}")));
                }
            }
        }
        Ok(())
    }

    /// Axis-aligned bounds of the vertex positions, `None` for an empty mesh.
    pub fn bounds(&self) -> Option<([f32; 3], [f32; 3])> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(mut lo, mut hi), v| {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
            (lo, hi)
        }))
    }

    /// True when `other` has the same triangle list and UV array.
    pub fn same_topology(&self, other: &MeshFrame) -> Result<(), String> {
        if self.vertices.len() != other.vertices.len() {
            return Err(format!(
                "vertex count {} != {}",
                other.vertices.len(),
                self.vertices.len()
            ));
        }
        if self.triangles.len() != other.triangles.len() {
            return Err(format!(
                "triangle count {} != {}",
                other.triangles.len(),
                self.triangles.len()
            ));
        }
        if self.triangles != other.triangles {
            return Err("triangle indices differ".into());
        }
        if self.uvs != other.uvs {
            return Err("uv arrays differ".into());
        }
        Ok(())
    }
}

pub(crate) fn length(v: &[f32; 3]) -> f64 {
    v.iter().map(|&c| f64::from(c) * f64::from(c)).sum::<f64>().sqrt()
}
