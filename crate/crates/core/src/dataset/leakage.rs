use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Manifest, Origin, Split};

/// Something (a patient, texture or uri) seen in more than one split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageFinding {
    pub subject: String,
    pub splits: Vec<Split>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageReport {
    /// Patients whose real clips sit in more than one split.
    pub real_patient_leaks: Vec<LeakageFinding>,
    /// Texture ids used in more than one split.
    pub shared_textures: Vec<LeakageFinding>,
    /// Uris that appear in more than one split.
    pub duplicate_uris: Vec<LeakageFinding>,
    /// Patients with synthetic clips in splits other than those of their
    /// real clips. Rendering test patients for validation is intended, so
    /// this is informational.
    pub sanctioned_overlap: Vec<LeakageFinding>,
}

impl LeakageReport {
    /// No real-clip or duplicate-uri leakage. Shared textures and sanctioned
    /// overlap do not count.
    pub fn is_clean(&self) -> bool {
        self.real_patient_leaks.is_empty() && self.duplicate_uris.is_empty()
    }
}

fn multi_split(map: BTreeMap<String, BTreeSet<Split>>) -> Vec<LeakageFinding> {
    map.into_iter()
        .filter(|(_, s)| s.len() > 1)
        .map(|(subject, s)| LeakageFinding {
            subject,
            splits: s.into_iter().collect(),
        })
        .collect()
}

pub fn verify_leakage(manifest: &Manifest) -> LeakageReport {
    let mut real: BTreeMap<String, BTreeSet<Split>> = BTreeMap::new();
    let mut synth: BTreeMap<String, BTreeSet<Split>> = BTreeMap::new();
    let mut textures: BTreeMap<String, BTreeSet<Split>> = BTreeMap::new();
    let mut uris: BTreeMap<String, BTreeSet<Split>> = BTreeMap::new();
    for r in manifest.records() {
        let s = manifest.split_of(&r.clip_id).expect("every record has a split");
        let by_origin = match r.origin {
            Origin::Real => &mut real,
            Origin::Synthetic => &mut synth,
        };
        by_origin.entry(r.patient_id.clone()).or_default().insert(s);
        if let Some(t) = &r.texture_id {
            textures.entry(t.clone()).or_default().insert(s);
        }
        uris.entry(r.uri.clone()).or_default().insert(s);
    }
    let sanctioned = synth
        .iter()
        .filter_map(|(patient, synth_splits)| {
            let real_splits = real.get(patient)?;
            let all: BTreeSet<Split> = real_splits.union(synth_splits).copied().collect();
            (all.len() > 1).then(|| (patient.clone(), all))
        })
        .collect();
    LeakageReport {
        real_patient_leaks: multi_split(real),
        shared_textures: multi_split(textures),
        duplicate_uris: multi_split(uris),
        sanctioned_overlap: multi_split(sanctioned),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ClipRecord, Regime, Strata};

    fn rec(id: &str, patient: &str, origin: Origin, uri: &str) -> ClipRecord {
        let synthetic = origin == Origin::Synthetic;
        ClipRecord {
            clip_id: id.into(),
            patient_id: patient.into(),
            origin,
            label: 0,
            texture_id: synthetic.then(|| format!("tex-{id}")),
            view_name: synthetic.then(|| "front".to_string()),
            uri: uri.into(),
            strata: Strata::default(),
        }
    }

    fn manifest(items: Vec<(ClipRecord, Split)>) -> Manifest {
        let splits = items.iter().map(|(r, s)| (r.clip_id.clone(), *s)).collect();
        Manifest::new(Regime::Mixed, items.into_iter().map(|(r, _)| r).collect(), splits).unwrap()
    }

    #[test]
    fn clean_manifest() {
        let m = manifest(vec![
            (rec("a", "p1", Origin::Real, "/a"), Split::Train),
            (rec("b", "p2", Origin::Real, "/b"), Split::Test),
        ]);
        let r = verify_leakage(&m);
        assert_eq!(r, LeakageReport::default());
        assert!(r.is_clean());
    }

    #[test]
    fn real_clip_in_train_and_test() {
        let m = manifest(vec![
            (rec("a", "p1", Origin::Real, "/a"), Split::Train),
            (rec("a-copy", "p1", Origin::Real, "/a"), Split::Test),
        ]);
        let r = verify_leakage(&m);
        assert_eq!(r.real_patient_leaks[0].subject, "p1");
        assert_eq!(r.real_patient_leaks[0].splits, vec![Split::Train, Split::Test]);
        assert_eq!(r.duplicate_uris.len(), 1);
        assert!(!r.is_clean());
    }

    #[test]
    fn synthetic_variants_of_test_patient_in_val() {
        let m = manifest(vec![
            (rec("real", "p1", Origin::Real, "/r"), Split::Test),
            (rec("syn", "p1", Origin::Synthetic, "/s"), Split::Val),
        ]);
        let r = verify_leakage(&m);
        assert!(r.real_patient_leaks.is_empty());
        assert_eq!(r.sanctioned_overlap[0].subject, "p1");
        assert!(r.is_clean());
    }
}
