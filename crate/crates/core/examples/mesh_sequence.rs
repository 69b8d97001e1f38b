// Writes a short animated mesh as per-frame OBJ files, loads it back as a
// sequence and shows what the loader checks.
//
// ```text
// cargo run --example mesh_sequence
// ```

use std::error::Error;

use headforge::mesh::{load_sequence, parse_obj, serialize_obj, Corner, MeshError, MeshFrame};

/// A unit quad split into two triangles; `t` lifts one corner.
fn quad(t: f32) -> MeshFrame {
    MeshFrame {
        vertices: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.1 * t], [0.0, 1.0, 0.0]],
        uvs: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        normals: None,
        triangles: vec![
            [0, 1, 2].map(|i| Corner::new(i, Some(i), None)),
            [0, 2, 3].map(|i| Corner::new(i, Some(i), None)),
        ],
    }
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let dir = tempfile_dir("mesh_sequence")?;

    // 50 frames at 25 fps
    for i in 0..50 {
        std::fs::write(dir.join(format!("frame_{i:04}.obj")), serialize_obj(&quad(i as f32 / 7.3)))?;
    }
    let seq = load_sequence(&dir, "p01", "p01_smile")?;
    println!("{} frames, {:.2} s, {} triangles", seq.len(), seq.duration(), seq.frames()[0].triangles.len());

    // coordinates survive a write/read cycle bit for bit
    let original = &seq.frames()[17];
    let again = parse_obj(&serialize_obj(original))?.frame;
    assert_eq!(&again, original);

    // a missing frame is an error, not a silently shorter clip
    std::fs::remove_file(dir.join("frame_0020.obj"))?;
    match load_sequence(&dir, "p01", "p01_smile") {
        Err(MeshError::MissingFrames(missing)) => println!("gap detected: {missing:?}"),
        other => return Err(format!("expected a gap, got {other:?}").into()),
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn tempfile_dir(name: &str) -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("headforge-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
