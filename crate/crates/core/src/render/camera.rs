use std::path::Path;

use serde::{Deserialize, Serialize};

use super::math::{add, cross, dot, normalize, sub, Vec3};
use super::RenderError;

pub const DEFAULT_RESOLUTION: u32 = 224;
pub const DEFAULT_FOV_DEGREES: f64 = 30.0;
/// Fraction of the image height the head occupies in the default framing.
pub const HEAD_FILL: f64 = 0.75;

/// A pinhole camera described by a look-at frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    #[serde(rename = "name")]
    pub view_name: String,
    pub eye: Vec3,
    pub target: Vec3,
    pub up: Vec3,
    /// Vertical field of view in degrees.
    #[serde(rename = "fov")]
    pub vertical_fov: f64,
    #[serde(rename = "resolution", with = "resolution")]
    pub image_size: (u32, u32),
    #[serde(default = "default_near")]
    pub near_plane: f64,
}

fn default_near() -> f64 {
    1e-3
}

mod resolution {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &(u32, u32), s: S) -> Result<S::Ok, S::Error> {
        [v.0, v.1].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(u32, u32), D::Error> {
        let [w, h] = <[u32; 2]>::deserialize(d)?;
        Ok((w, h))
    }
}

/// Where a world point lands on the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Pixel coordinates; pixel `(i, j)` covers `[i, i+1) x [j, j+1)` and its
    /// center is at `(i + 0.5, j + 0.5)`. `y` grows downward.
    pub screen: [f64; 2],
    /// Distance along the viewing axis.
    pub depth: f64,
    /// The point is closer than the near plane and must be clipped.
    pub clipped: bool,
}

/// Orthonormal camera frame: `right`, `up`, `forward` (toward the target).
#[derive(Debug, Clone, Copy)]
pub struct ViewBasis {
    pub eye: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    pub forward: Vec3,
}

impl ViewBasis {
    /// World to view space: x right, y up, z forward (positive in front).
    #[inline]
    pub fn to_view(&self, p: Vec3) -> Vec3 {
        let d = sub(p, self.eye);
        [dot(d, self.right), dot(d, self.up), dot(d, self.forward)]
    }
}

impl Camera {
    pub fn width(&self) -> u32 {
        self.image_size.0
    }

    pub fn height(&self) -> u32 {
        self.image_size.1
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: String| Err(RenderError::Camera(format!("{}: {m}", self.view_name)));
        if !(self.vertical_fov > 0.0 && self.vertical_fov < 180.0) {
            return bad(format!("vertical fov {} not in (0, 180)", self.vertical_fov));
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return bad("zero image size".into());
        }
        if self.near_plane.is_nan() || self.near_plane <= 0.0 {
            return bad("near plane must be positive".into());
        }
        let Some(forward) = normalize(sub(self.target, self.eye)) else {
            return bad("eye equals target".into());
        };
        if normalize(cross(forward, self.up)).is_none() {
            return bad("up is parallel to the view direction".into());
        }
        Ok(())
    }

    pub fn basis(&self) -> ViewBasis {
        let forward = normalize(sub(self.target, self.eye)).expect("validated camera");
        let right = normalize(cross(forward, self.up)).expect("validated camera");
        let up = cross(right, forward);
        ViewBasis {
            eye: self.eye,
            right,
            up,
            forward,
        }
    }

    /// `1 / tan(fov / 2)`.
    pub fn focal(&self) -> f64 {
        1.0 / (self.vertical_fov.to_radians() * 0.5).tan()
    }

    /// Maps a view-space point to pixel coordinates. Only meaningful for
    /// `view[2] > 0`.
    #[inline]
    pub fn view_to_screen(&self, view: Vec3) -> [f64; 2] {
        let (w, h) = (f64::from(self.image_size.0), f64::from(self.image_size.1));
        let f = self.focal();
        let x_ndc = f * view[0] / (view[2] * (w / h));
        let y_ndc = f * view[1] / view[2];
        [(x_ndc + 1.0) * 0.5 * w, (1.0 - y_ndc) * 0.5 * h]
    }

    pub fn project(&self, p: Vec3) -> Projection {
        self.project_with(&self.basis(), p)
    }

    #[inline]
    pub fn project_with(&self, basis: &ViewBasis, p: Vec3) -> Projection {
        let view = basis.to_view(p);
        Projection {
            screen: self.view_to_screen(view),
            depth: view[2],
            clipped: view[2] < self.near_plane,
        }
    }

    /// Camera looking at the head from +Z with the bounding box filling
    /// [`HEAD_FILL`] of the image height.
    pub fn front(bounds: ([f32; 3], [f32; 3]), image_size: (u32, u32), vertical_fov: f64) -> Self {
        let (lo, hi) = bounds;
        let center = [0, 1, 2].map(|k| 0.5 * (f64::from(lo[k]) + f64::from(hi[k])));
        let half = [0, 1, 2].map(|k| 0.5 * (f64::from(hi[k]) - f64::from(lo[k])));
        let tan = (vertical_fov.to_radians() * 0.5).tan();
        let aspect = f64::from(image_size.0) / f64::from(image_size.1);
        // frame the larger of height and (aspect-corrected) width
        let extent = half[1].max(half[0] / aspect).max(1e-6);
        let distance = extent / (HEAD_FILL * tan) + half[2];
        Camera {
            view_name: "front".into(),
            eye: add(center, [0.0, 0.0, distance]),
            target: center,
            up: [0.0, 1.0, 0.0],
            vertical_fov,
            image_size,
            near_plane: (distance * 1e-3).max(1e-6),
        }
    }

    /// The front camera rotated about the vertical axis through the head
    /// center. Positive yaw moves the eye toward -X, the subject's right side
    /// for a head facing +Z.
    pub fn yawed(&self, view_name: &str, yaw_degrees: f64) -> Self {
        let (s, c) = (-yaw_degrees.to_radians()).sin_cos();
        let d = sub(self.eye, self.target);
        let rotated = [c * d[0] + s * d[2], d[1], -s * d[0] + c * d[2]];
        Camera {
            view_name: view_name.into(),
            eye: add(self.target, rotated),
            ..self.clone()
        }
    }
}

/// The two standard views: frontal, and a right profile at 90 degrees yaw.
pub fn default_cameras(bounds: ([f32; 3], [f32; 3]), resolution: u32) -> Vec<Camera> {
    let front = Camera::front(bounds, (resolution, resolution), DEFAULT_FOV_DEGREES);
    let side = front.yawed("side", 90.0);
    vec![front, side]
}

/// Reads a camera list (JSON array of `{name, eye, target, up, fov, resolution}`).
pub fn load_cameras(path: &Path) -> Result<Vec<Camera>, RenderError> {
    let text = std::fs::read_to_string(path)?;
    let cams: Vec<Camera> =
        serde_json::from_str(&text).map_err(|e| RenderError::Camera(e.to_string()))?;
    for c in &cams {
        c.validate()?;
    }
    Ok(cams)
}
