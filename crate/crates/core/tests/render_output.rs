mod common;

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use headforge::mesh::{load_sequence, MeshSequence};
use headforge::render::{
    default_cameras, load_cameras, render_sequence, render_variant, variant_dir, Camera, ClipMeta,
    RenderSettings, ONLY_MESH_DIR,
};
use headforge::texture::{TextureAssignment, TextureAtlas};

fn sequence(dir: &Path, frames: usize) -> MeshSequence {
    common::head_sequence(dir, frames);
    load_sequence(dir, "p01", "p01_c01").unwrap()
}

fn cameras(seq: &MeshSequence, res: u32) -> Vec<Camera> {
    default_cameras(seq.frames()[0].bounds().unwrap(), res)
}

fn checker(id: &str, a: [u8; 3], b: [u8; 3]) -> Arc<TextureAtlas> {
    let px: Vec<u8> = (0..16 * 16)
        .flat_map(|i| if (i % 16 / 4 + i / 64) % 2 == 0 { a } else { b })
        .collect();
    Arc::new(TextureAtlas::new(id, 16, 16, px).unwrap())
}

fn files_under(dir: &Path, ext: &str) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == ext) {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

#[test]
fn three_frames_two_views_one_texture() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = sequence(&tmp.path().join("seq"), 3);
    let out = tmp.path().join("out");
    let mut atlases = HashMap::new();
    atlases.insert("skin01".to_string(), checker("skin01", [220, 180, 150], [90, 60, 40]));
    let assignment = TextureAssignment {
        patient_id: "p01".into(),
        texture_ids: vec!["skin01".into()],
        seed: 0,
    };
    let metas = render_sequence(&seq, &assignment, &cameras(&seq, 48), &RenderSettings::default(), &atlases, &out)
        .unwrap();
    assert_eq!(metas.len(), 2);
    assert_eq!(files_under(&out, "png").len(), 6);
    assert_eq!(files_under(&out, "json").len(), 2);
    for view in ["front", "side"] {
        let dir = variant_dir(&out, "p01_c01", view, Some("skin01"));
        for i in 0..3 {
            let img = image::open(dir.join(format!("frame_{i:04}.png"))).unwrap();
            assert_eq!((img.width(), img.height()), (48, 48));
        }
        let meta: ClipMeta = serde_json::from_slice(&std::fs::read(dir.join("clip.json")).unwrap()).unwrap();
        assert_eq!(meta.view_name, view);
        assert_eq!(meta.texture_id.as_deref(), Some("skin01"));
        assert_eq!(meta.frame_count, 3);
        assert!((meta.duration_s - 0.12).abs() < 1e-12);
    }
    // no temporary directories are left behind
    let leftovers: Vec<_> = std::fs::read_dir(out.join("p01_c01/front"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(leftovers, vec!["skin01"]);
}

#[test]
fn empty_assignment_renders_only_mesh() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = sequence(&tmp.path().join("seq"), 2);
    let out = tmp.path().join("out");
    let assignment = TextureAssignment {
        patient_id: "p01".into(),
        texture_ids: vec![],
        seed: 0,
    };
    let atlases: HashMap<String, Arc<TextureAtlas>> = HashMap::new();
    let metas =
        render_sequence(&seq, &assignment, &cameras(&seq, 32), &RenderSettings::default(), &atlases, &out).unwrap();
    assert!(metas.iter().all(|m| m.texture_id.is_none()));
    assert!(out.join("p01_c01/front").join(ONLY_MESH_DIR).join("frame_0001.png").exists());
}

#[test]
fn missing_atlas_fails_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = sequence(&tmp.path().join("seq"), 2);
    let out = tmp.path().join("out");
    let assignment = TextureAssignment {
        patient_id: "p01".into(),
        texture_ids: vec!["ghost".into()],
        seed: 0,
    };
    let atlases: HashMap<String, Arc<TextureAtlas>> = HashMap::new();
    assert!(render_sequence(&seq, &assignment, &cameras(&seq, 32), &RenderSettings::default(), &atlases, &out).is_err());
    assert!(!out.exists());
}

#[test]
fn rerendering_a_finished_variant_is_a_no_op() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = sequence(&tmp.path().join("seq"), 2);
    let out = tmp.path().join("out");
    let atlas = checker("t", [255, 0, 0], [0, 0, 255]);
    let cam = &cameras(&seq, 32)[0];
    let first = render_variant(&seq, Some(&atlas), cam, &RenderSettings::default(), &out).unwrap();
    let frame = variant_dir(&out, "p01_c01", "front", Some("t")).join("frame_0000.png");
    let stamp = std::fs::metadata(&frame).unwrap().modified().unwrap();
    let second = render_variant(&seq, Some(&atlas), cam, &RenderSettings::default(), &out).unwrap();
    assert_eq!(first, second);
    assert_eq!(std::fs::metadata(&frame).unwrap().modified().unwrap(), stamp);
}

#[test]
fn textures_change_pixels_and_views_differ() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = sequence(&tmp.path().join("seq"), 1);
    let out = tmp.path().join("out");
    let cams = cameras(&seq, 40);
    let s = RenderSettings::default();
    let red = checker("red", [255, 0, 0], [200, 0, 0]);
    let blue = checker("blue", [0, 0, 255], [0, 0, 200]);
    render_variant(&seq, Some(&red), &cams[0], &s, &out).unwrap();
    render_variant(&seq, Some(&blue), &cams[0], &s, &out).unwrap();
    render_variant(&seq, Some(&red), &cams[1], &s, &out).unwrap();
    let read = |view: &str, tex: &str| {
        std::fs::read(variant_dir(&out, "p01_c01", view, Some(tex)).join("frame_0000.png")).unwrap()
    };
    let r = image::load_from_memory(&read("front", "red")).unwrap().to_rgb8();
    let center = r.get_pixel(20, 20);
    assert!(center[0] > 0 && center[2] == 0, "{center:?}");
    assert_ne!(read("front", "red"), read("front", "blue"));
    assert_ne!(read("front", "red"), read("side", "red"));
}

#[test]
fn camera_file_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cams = default_cameras(([-1.0; 3], [1.0; 3]), 64);
    let path = tmp.path().join("cameras.json");
    std::fs::write(&path, serde_json::to_string(&cams).unwrap()).unwrap();
    assert_eq!(load_cameras(&path).unwrap(), cams);
    std::fs::write(&path, r#"[{"name":"bad","eye":[0,0,0],"target":[0,0,0],"up":[0,1,0],"fov":30,"resolution":[8,8]}]"#)
        .unwrap();
    assert!(load_cameras(&path).is_err());
}
