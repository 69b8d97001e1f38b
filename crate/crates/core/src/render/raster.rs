use serde::{Deserialize, Serialize};

use super::camera::Camera;
use super::math::{cross, dot, lerp, normalize, sub, widen, Vec3};
use crate::mesh::MeshFrame;
use crate::texture::{sample_bilinear, TextureAtlas};

/// Color and depth targets for one rendered image.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBuffer {
    width: u32,
    height: u32,
    color: Vec<f32>,
    depth: Vec<f64>,
}

impl FrameBuffer {
    pub fn new(width: u32, height: u32, background: [f32; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut color = Vec::with_capacity(n * 3);
        for _ in 0..n {
            color.extend_from_slice(&background);
        }
        Self {
            width,
            height,
            color,
            depth: vec![f64::INFINITY; n],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn color(&self) -> &[f32] {
        &self.color
    }

    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f32; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.color[i], self.color[i + 1], self.color[i + 2]]
    }

    pub fn depth_at(&self, x: u32, y: u32) -> f64 {
        self.depth[y as usize * self.width as usize + x as usize]
    }

    /// Pixels that received at least one fragment.
    pub fn coverage(&self) -> Vec<bool> {
        self.depth.iter().map(|d| d.is_finite()).collect()
    }

    /// 8-bit RGB, rounding to nearest.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.color
            .iter()
            .map(|&c| (c.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSettings {
    /// Unit vector pointing from the surface toward the light, world space.
    pub light_direction: Vec3,
    pub ambient: f64,
    pub background: [f32; 3],
    /// Surface color when no texture is bound (the only-mesh condition).
    pub only_mesh_albedo: [f32; 3],
    pub backface_culling: bool,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            light_direction: normalize([-0.4, 0.4, 1.0]).unwrap(),
            ambient: 0.3,
            background: [0.0, 0.0, 0.0],
            only_mesh_albedo: [0.5, 0.5, 0.5],
            backface_culling: true,
        }
    }
}

/// A fragment that passed the depth test.
#[derive(Debug, Clone, Copy)]
pub struct Fragment {
    pub x: u32,
    pub y: u32,
    pub depth: f64,
    pub uv: [f64; 2],
    pub normal: Vec3,
}

#[derive(Clone, Copy)]
struct ClipVert {
    view: Vec3,
    uv: [f64; 2],
    normal: Vec3,
}

#[derive(Clone, Copy)]
struct ScreenVert {
    x: f64,
    y: f64,
    inv_z: f64,
    uv_z: [f64; 2],
    normal_z: Vec3,
}

impl ScreenVert {
    fn new(camera: &Camera, v: &ClipVert) -> Self {
        let [x, y] = camera.view_to_screen(v.view);
        let inv_z = 1.0 / v.view[2];
        Self {
            x,
            y,
            inv_z,
            uv_z: [v.uv[0] * inv_z, v.uv[1] * inv_z],
            normal_z: [0, 1, 2].map(|k| v.normal[k] * inv_z),
        }
    }
}

/// Signed edge function. Evaluated with the endpoints in a canonical order so
/// that `edge(a, b, p) == -edge(b, a, p)` exactly and pixels on an edge shared
/// by two triangles are claimed by exactly one of them.
#[inline]
fn edge(a: &ScreenVert, b: &ScreenVert, px: f64, py: f64) -> f64 {
    let raw = |a: &ScreenVert, b: &ScreenVert| (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
    if (a.x, a.y) <= (b.x, b.y) {
        raw(a, b)
    } else {
        -raw(b, a)
    }
}

/// Top-left fill rule for an edge whose interior lies on its positive side
/// (y grows downward).
#[inline]
fn is_top_left(a: &ScreenVert, b: &ScreenVert) -> bool {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

#[inline]
fn inside(w: f64, top_left: bool) -> bool {
    w > 0.0 || (w == 0.0 && top_left)
}

/// Clips a polygon against `z >= near` in view space.
fn clip_near(input: &[ClipVert], near: f64, out: &mut Vec<ClipVert>) {
    out.clear();
    for i in 0..input.len() {
        let a = &input[i];
        let b = &input[(i + 1) % input.len()];
        let a_in = a.view[2] >= near;
        let b_in = b.view[2] >= near;
        if a_in {
            out.push(*a);
        }
        if a_in != b_in {
            let t = (near - a.view[2]) / (b.view[2] - a.view[2]);
            let mut view = lerp(a.view, b.view, t);
            view[2] = near;
            out.push(ClipVert {
                view,
                uv: [
                    a.uv[0] + (b.uv[0] - a.uv[0]) * t,
                    a.uv[1] + (b.uv[1] - a.uv[1]) * t,
                ],
                normal: lerp(a.normal, b.normal, t),
            });
        }
    }
}

/// Rasterizes every triangle of `frame`, keeping the nearest fragment per
/// pixel in `depth` and handing each fragment that passes the depth test to
/// `shade` together with the triangle's geometric face normal.
fn rasterize_with<F>(
    frame: &MeshFrame,
    camera: &Camera,
    backface_culling: bool,
    depth: &mut [f64],
    mut shade: F,
) where
    F: FnMut(usize, &Fragment, Vec3),
{
    let (width, height) = camera.image_size;
    let basis = camera.basis();
    let view_pos: Vec<Vec3> = frame
        .vertices
        .iter()
        .map(|&v| basis.to_view(widen(v)))
        .collect();
    let normals = frame.normals.as_deref();

    let mut clipped = Vec::with_capacity(4);
    for tri in &frame.triangles {
        let world = tri.map(|c| widen(frame.vertices[c.vertex]));
        let Some(face_normal) = normalize(cross(sub(world[1], world[0]), sub(world[2], world[0])))
        else {
            continue;
        };
        if backface_culling && dot(face_normal, sub(camera.eye, world[0])) <= 0.0 {
            continue;
        }
        let vertex_normals = normals.and_then(|ns| {
            let idx = [tri[0].normal?, tri[1].normal?, tri[2].normal?];
            Some(idx.map(|i| widen(ns[i])))
        });
        let corners = [0, 1, 2].map(|k| ClipVert {
            view: view_pos[tri[k].vertex],
            uv: tri[k]
                .uv
                .map_or([0.0, 0.0], |i| frame.uvs[i].map(f64::from)),
            normal: vertex_normals.map_or(face_normal, |n| n[k]),
        });
        clip_near(&corners, camera.near_plane, &mut clipped);
        if clipped.len() < 3 {
            continue;
        }
        let screen: Vec<ScreenVert> = clipped.iter().map(|v| ScreenVert::new(camera, v)).collect();
        for k in 1..screen.len() - 1 {
            let mut t = [screen[0], screen[k], screen[k + 1]];
            let mut area = edge(&t[0], &t[1], t[2].x, t[2].y);
            if area < 0.0 {
                t.swap(1, 2);
                area = -area;
            }
            if !(area > 0.0 && area.is_finite()) {
                continue;
            }
            fill_triangle(&t, width, height, vertex_normals.is_some(), face_normal, depth, &mut shade);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn fill_triangle<F>(
    t: &[ScreenVert; 3],
    width: u32,
    height: u32,
    smooth: bool,
    face_normal: Vec3,
    depth: &mut [f64],
    shade: &mut F,
) where
    F: FnMut(usize, &Fragment, Vec3),
{
    let min_x = t.iter().map(|v| v.x).fold(f64::INFINITY, f64::min);
    let max_x = t.iter().map(|v| v.x).fold(f64::NEG_INFINITY, f64::max);
    let min_y = t.iter().map(|v| v.y).fold(f64::INFINITY, f64::min);
    let max_y = t.iter().map(|v| v.y).fold(f64::NEG_INFINITY, f64::max);
    let x0 = (min_x - 0.5).ceil().max(0.0);
    let x1 = (max_x - 0.5).floor().min(f64::from(width) - 1.0);
    let y0 = (min_y - 0.5).ceil().max(0.0);
    let y1 = (max_y - 0.5).floor().min(f64::from(height) - 1.0);
    if x0 > x1 || y0 > y1 {
        return;
    }
    let tl = [
        is_top_left(&t[1], &t[2]),
        is_top_left(&t[2], &t[0]),
        is_top_left(&t[0], &t[1]),
    ];

    for py in y0 as u32..=y1 as u32 {
        let cy = f64::from(py) + 0.5;
        for px in x0 as u32..=x1 as u32 {
            let cx = f64::from(px) + 0.5;
            let w0 = edge(&t[1], &t[2], cx, cy);
            let w1 = edge(&t[2], &t[0], cx, cy);
            let w2 = edge(&t[0], &t[1], cx, cy);
            if !(inside(w0, tl[0]) && inside(w1, tl[1]) && inside(w2, tl[2])) {
                continue;
            }
            let sum = w0 + w1 + w2;
            let l = [w0 / sum, w1 / sum, w2 / sum];
            let inv_z = l[0] * t[0].inv_z + l[1] * t[1].inv_z + l[2] * t[2].inv_z;
            let z = 1.0 / inv_z;
            let idx = py as usize * width as usize + px as usize;
            if z.is_nan() || z >= depth[idx] {
                continue;
            }
            depth[idx] = z;
            let uv = [0, 1].map(|k| {
                (l[0] * t[0].uv_z[k] + l[1] * t[1].uv_z[k] + l[2] * t[2].uv_z[k]) * z
            });
            let normal = if smooth {
                let n = [0, 1, 2].map(|k| {
                    l[0] * t[0].normal_z[k] + l[1] * t[1].normal_z[k] + l[2] * t[2].normal_z[k]
                });
                normalize(n).unwrap_or(face_normal)
            } else {
                face_normal
            };
            shade(
                idx,
                &Fragment {
                    x: px,
                    y: py,
                    depth: z,
                    uv,
                    normal,
                },
                face_normal,
            );
        }
    }
}

/// Renders one mesh frame. Without an atlas the surface uses
/// `settings.only_mesh_albedo`.
///
/// Shading is `albedo * (ambient + max(0, n.l) * (1 - ambient))`, with vertex
/// normals when every corner of a triangle has one and the face normal
/// otherwise. UVs are interpolated perspective-correctly and triangles
/// crossing the near plane are clipped.
pub fn rasterize_frame(
    frame: &MeshFrame,
    atlas: Option<&TextureAtlas>,
    camera: &Camera,
    settings: &RenderSettings,
) -> FrameBuffer {
    let (w, h) = camera.image_size;
    let mut fb = FrameBuffer::new(w, h, settings.background);
    let light = normalize(settings.light_direction).unwrap_or([0.0, 0.0, 1.0]);
    let ambient = settings.ambient.clamp(0.0, 1.0);
    let FrameBuffer { color, depth, .. } = &mut fb;
    rasterize_with(frame, camera, settings.backface_culling, depth, |idx, frag, _| {
        let albedo = match atlas {
            Some(a) => sample_bilinear(a, [frag.uv[0] as f32, frag.uv[1] as f32]),
            None => settings.only_mesh_albedo,
        };
        let diffuse = dot(frag.normal, light).max(0.0);
        let intensity = (ambient + diffuse * (1.0 - ambient)).min(1.0);
        for c in 0..3 {
            color[idx * 3 + c] = (f64::from(albedo[c]) * intensity).clamp(0.0, 1.0) as f32;
        }
    });
    fb
}

/// Per-pixel interpolated attributes of the visible surface.
#[derive(Debug, Clone)]
pub struct AttributeBuffer {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f64>,
    pub uv: Vec<Option<[f64; 2]>>,
}

impl AttributeBuffer {
    pub fn coverage(&self) -> Vec<bool> {
        self.uv.iter().map(Option::is_some).collect()
    }
}

/// Runs the same rasterization as [`rasterize_frame`] but records the
/// interpolated UV and depth of the winning fragment instead of a color.
pub fn rasterize_attributes(frame: &MeshFrame, camera: &Camera, backface_culling: bool) -> AttributeBuffer {
    let (w, h) = camera.image_size;
    let n = w as usize * h as usize;
    let mut depth = vec![f64::INFINITY; n];
    let mut uv = vec![None; n];
    rasterize_with(frame, camera, backface_culling, &mut depth, |idx, frag, _| {
        uv[idx] = Some(frag.uv);
    });
    AttributeBuffer {
        width: w,
        height: h,
        depth,
        uv,
    }
}
