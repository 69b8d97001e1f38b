// Texture pools, bilinear lookups and the seeded per-patient draw used to
// build the textures-per-patient conditions.
//
// ```text
// cargo run --example texture_assignment
// ```

use std::error::Error;

use headforge::texture::{assign_textures, sample_bilinear, TextureAtlas};

pub fn run() -> Result<(), Box<dyn Error>> {
    // 2x2 atlas; rows run top to bottom, v runs bottom to top
    let atlas = TextureAtlas::new("demo", 2, 2, vec![255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255])?;
    for uv in [[0.25, 0.75], [0.5, 0.5], [0.75, 0.25], [1.25, 0.75]] {
        let rgb = sample_bilinear(&atlas, uv);
        println!("uv {uv:?} -> [{:.3}, {:.3}, {:.3}]", rgb[0], rgb[1], rgb[2]);
    }

    let pool: Vec<String> = (0..12).map(|i| format!("skin{i:02}")).collect();
    let patients: Vec<String> = (1..=4).map(|i| format!("p{i:02}")).collect();
    for n in [0, 1, 3] {
        let assignments = assign_textures(&patients, &pool, n, 42)?;
        println!("n = {n}");
        for a in &assignments {
            let shown = if a.is_only_mesh() { "(mesh only)".to_string() } else { a.texture_ids.join(", ") };
            println!("  {}: {shown}", a.patient_id);
        }
        // same seed, same draw
        assert_eq!(assign_textures(&patients, &pool, n, 42)?, assignments);
    }

    let too_many = assign_textures(&patients, &pool, 20, 42);
    println!("asking for 20 of 12: {}", too_many.unwrap_err());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
