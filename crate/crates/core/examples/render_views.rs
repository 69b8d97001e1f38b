// Renders a textured sphere "head" from the front and side cameras and
// writes the frames plus per-clip metadata.
//
// ```text
// cargo run --example render_views -- /tmp/renders
// ```

use std::collections::HashMap;
use std::error::Error;
use std::path::PathBuf;
use std::sync::Arc;

use headforge::mesh::{Corner, MeshFrame, MeshSequence};
use headforge::render::{default_cameras, render_sequence, RenderSettings};
use headforge::texture::{TextureAssignment, TextureAtlas};

fn sphere(squash: f32) -> MeshFrame {
    let (rings, segs) = (12, 24);
    let mut vertices = Vec::new();
    let mut uvs = Vec::new();
    for r in 0..=rings {
        let v = r as f32 / rings as f32;
        let theta = v * std::f32::consts::PI;
        for s in 0..=segs {
            let u = s as f32 / segs as f32;
            let phi = u * std::f32::consts::TAU;
            vertices.push([theta.sin() * phi.sin(), theta.cos() * (1.2 - squash), theta.sin() * phi.cos()]);
            uvs.push([u, 1.0 - v]);
        }
    }
    let at = |r: usize, s: usize| r * (segs + 1) + s;
    let mut triangles = Vec::new();
    for r in 0..rings {
        for s in 0..segs {
            let c = |i| Corner::new(i, Some(i), None);
            triangles.push([c(at(r, s)), c(at(r + 1, s)), c(at(r + 1, s + 1))]);
            triangles.push([c(at(r, s)), c(at(r + 1, s + 1)), c(at(r, s + 1))]);
        }
    }
    MeshFrame { vertices, uvs, normals: None, triangles }
}

fn stripes(id: &str, a: [u8; 3], b: [u8; 3]) -> Result<TextureAtlas, Box<dyn Error>> {
    let (w, h) = (64u32, 32u32);
    let px = (0..w * h).flat_map(|i| if (i % w) / 8 % 2 == 0 { a } else { b }).collect();
    Ok(TextureAtlas::new(id, w, h, px)?)
}

pub fn run_in(out: PathBuf) -> Result<(), Box<dyn Error>> {
    let frames = (0..5).map(|i| sphere(0.05 * i as f32)).collect();
    let seq = MeshSequence::new(frames, 25.0, "p01", "p01_demo")?;
    let cameras = default_cameras(seq.frames()[0].bounds().ok_or("empty mesh")?, 96);

    let mut atlases = HashMap::new();
    atlases.insert("warm".to_string(), Arc::new(stripes("warm", [225, 180, 150], [160, 110, 90])?));
    atlases.insert("cool".to_string(), Arc::new(stripes("cool", [120, 150, 210], [60, 80, 140])?));
    let assignment = TextureAssignment {
        patient_id: "p01".into(),
        texture_ids: vec!["warm".into(), "cool".into()],
        seed: 0,
    };

    let metas = render_sequence(&seq, &assignment, &cameras, &RenderSettings::default(), &atlases, &out)?;
    for m in &metas {
        println!("{} frames -> {}", m.frame_count, m.frames_dir.display());
    }
    Ok(())
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let out = std::env::temp_dir().join(format!("headforge-render-{}", std::process::id()));
    run_in(out.clone())?;
    std::fs::remove_dir_all(out)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    match std::env::args_os().nth(1) {
        Some(dir) => run_in(dir.into()),
        None => run(),
    }
}
