#![allow(dead_code)]

use std::path::Path;

use headforge::mesh::{serialize_obj, Corner, MeshFrame};

/// A coarse UV sphere standing in for a head; `phase` opens the "jaw".
pub fn head_frame(phase: f32) -> MeshFrame {
    let (rings, segs) = (6usize, 10usize);
    let mut vertices = Vec::new();
    let mut uvs = Vec::new();
    for r in 0..=rings {
        let v = r as f32 / rings as f32;
        let theta = v * std::f32::consts::PI;
        for s in 0..=segs {
            let u = s as f32 / segs as f32;
            let phi = u * 2.0 * std::f32::consts::PI;
            let jaw = 1.0 + phase * 0.15 * (v - 0.5).max(0.0);
            vertices.push([theta.sin() * phi.sin(), theta.cos() * 1.2 * jaw, theta.sin() * phi.cos()]);
            uvs.push([u, 1.0 - v]);
        }
    }
    let idx = |r: usize, s: usize| r * (segs + 1) + s;
    let mut triangles = Vec::new();
    for r in 0..rings {
        for s in 0..segs {
            let (a, b, c, d) = (idx(r, s), idx(r + 1, s), idx(r + 1, s + 1), idx(r, s + 1));
            triangles.push([a, b, c].map(|i| Corner::new(i, Some(i), None)));
            triangles.push([a, c, d].map(|i| Corner::new(i, Some(i), None)));
        }
    }
    MeshFrame {
        vertices,
        uvs,
        normals: None,
        triangles,
    }
}

/// Writes `frames` as `frame_0000.obj`, `frame_0001.obj`, ... into `dir`.
pub fn write_sequence(dir: &Path, frames: &[MeshFrame]) {
    std::fs::create_dir_all(dir).unwrap();
    for (i, f) in frames.iter().enumerate() {
        std::fs::write(dir.join(format!("frame_{i:04}.obj")), serialize_obj(f)).unwrap();
    }
}

pub fn head_sequence(dir: &Path, n: usize) {
    let frames: Vec<_> = (0..n).map(|i| head_frame(i as f32 / n.max(1) as f32)).collect();
    write_sequence(dir, &frames);
}

/// An RGB checkerboard PNG.
pub fn write_checker_png(path: &Path, size: u32, a: [u8; 3], b: [u8; 3]) {
    let mut img = image::RgbImage::new(size, size);
    for (x, y, p) in img.enumerate_pixels_mut() {
        *p = image::Rgb(if ((x / 4) + (y / 4)) % 2 == 0 { a } else { b });
    }
    img.save(path).unwrap();
}
