// From clip lists to training manifests: the ablation grid, synthetic
// records, a stratified patient-level split, the three training regimes and
// the leakage check.
//
// ```text
// cargo run --example dataset_regimes
// ```

use std::collections::BTreeMap;
use std::error::Error;

use headforge::dataset::{
    build_manifest, count_jobs, plan_jobs, real_records, stratified_split, synthetic_records, verify_leakage,
    AblationPlan, ClipSource, Manifest, Regime, Split, SplitOptions, StrataRow, StrataTable,
};
use headforge::texture::{PoolEntry, TexturePool};

pub fn run() -> Result<(), Box<dyn Error>> {
    let patients = 40;
    let clips: Vec<ClipSource> = (0..patients * 3)
        .map(|i| ClipSource {
            patient_id: format!("p{:02}", i / 3),
            clip_id: format!("p{:02}_c{}", i / 3, i % 3),
            label: u8::from(i % 4 == 0),
            sequence_uri: format!("/meshes/{i}"),
            video_uri: Some(format!("/videos/{i}.mp4")),
            split: Some(if i / 3 >= 32 { Split::Test } else { Split::Train }),
        })
        .collect();
    let strata = StrataTable::from_rows((0..patients).map(|p| StrataRow {
        patient_id: format!("p{p:02}"),
        gender: if p % 2 == 0 { "f" } else { "m" }.into(),
        age: 22.0 + (p * 13 % 55) as f64,
        expressiveness: if p % 3 == 0 { "high" } else { "low" }.into(),
    }))?;
    let pool = TexturePool::from_entries(
        (0..10)
            .map(|i| PoolEntry { texture_id: format!("skin{i}"), path: format!("/textures/skin{i}.png").into(), tags: vec![] })
            .collect(),
    )?;

    let train: Vec<ClipSource> = clips.iter().filter(|c| c.split == Some(Split::Train)).cloned().collect();
    let mut ids: Vec<String> = train.iter().map(|c| c.patient_id.clone()).collect();
    ids.dedup();

    println!("grid for {} training clips:", train.len());
    for n in [0, 1, 2, 3, 5, 10] {
        println!("  n = {n:>2}: {:>4} jobs with both views", count_jobs(train.len(), n, 2));
    }

    let plan = AblationPlan::new(3, &["front", "side"], 7)?;
    let jobs = plan_jobs(&train, &plan.assign(&ids, &pool)?, &plan, &pool, "/renders")?;
    let synth_records = synthetic_records(&jobs, &train, &strata)?;
    let split = stratified_split(&synth_records, &SplitOptions { seed: 7, ..SplitOptions::default() })?;
    println!(
        "synthetic split: max stratum deviation {:.3}{}",
        split.max_deviation,
        if split.best_effort { " (best effort)" } else { "" }
    );
    let synth = Manifest::new(Regime::Synth, synth_records, split.split_of)?;

    let real_split: BTreeMap<_, _> = clips.iter().map(|c| (c.clip_id.clone(), c.split.unwrap_or(Split::Train))).collect();
    let real = Manifest::new(Regime::Real, real_records(&clips, &strata)?, real_split)?;

    for regime in [Regime::Real, Regime::Synth, Regime::Mixed] {
        let m = build_manifest(regime, Some(&real), Some(&synth))?;
        let sizes: Vec<String> = Split::ALL.iter().map(|s| format!("{} {}", s.as_str(), m.records_in(*s).len())).collect();
        let report = verify_leakage(&m);
        println!(
            "{regime:?}: {} records ({}), val is test: {}, clean: {}, shared textures: {}",
            m.len(),
            sizes.join(", "),
            m.val_is_test(),
            report.is_clean(),
            report.shared_textures.len()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
