use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClipRecord, DatasetError, Origin, Regime, Split};

const MANIFEST_KIND: &str = "headforge-manifest";
const MANIFEST_VERSION: u32 = 1;

/// A set of clips with one split per clip.
///
/// A manifest without validation records uses its test set for validation;
/// [`Manifest::val_is_test`] reports this and [`Manifest::records_in`] with
/// [`Split::Val`] then returns the test records.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub regime: Regime,
    records: Vec<ClipRecord>,
    split_of: BTreeMap<String, Split>,
}

/// First line of a manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub kind: String,
    pub version: u32,
    pub regime: Regime,
    pub val_is_test: bool,
    pub records: usize,
}

#[derive(Serialize, Deserialize)]
struct Line {
    #[serde(flatten)]
    record: ClipRecord,
    split: Split,
}

impl Manifest {
    pub fn new(
        regime: Regime,
        records: Vec<ClipRecord>,
        split_of: BTreeMap<String, Split>,
    ) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for r in &records {
            r.validate()?;
            if !seen.insert(r.clip_id.as_str()) {
                return Err(DatasetError::DuplicateClip(r.clip_id.clone()));
            }
            if !split_of.contains_key(&r.clip_id) {
                return Err(DatasetError::InvalidRecord {
                    clip: r.clip_id.clone(),
                    message: "no split assigned".into(),
                });
            }
        }
        if let Some(extra) = split_of.keys().find(|k| !seen.contains(k.as_str())) {
            return Err(DatasetError::InvalidRecord {
                clip: extra.clone(),
                message: "split assigned to a clip that is not in the manifest".into(),
            });
        }
        Ok(Self {
            regime,
            records,
            split_of,
        })
    }

    /// All records in one split.
    pub fn uniform(regime: Regime, records: Vec<ClipRecord>, split: Split) -> Result<Self, DatasetError> {
        let split_of = records.iter().map(|r| (r.clip_id.clone(), split)).collect();
        Self::new(regime, records, split_of)
    }

    pub fn records(&self) -> &[ClipRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split_of(&self, clip_id: &str) -> Option<Split> {
        self.split_of.get(clip_id).copied()
    }

    pub fn splits(&self) -> &BTreeMap<String, Split> {
        &self.split_of
    }

    pub fn val_is_test(&self) -> bool {
        !self.split_of.values().any(|s| *s == Split::Val)
    }

    /// Records of `split`, honouring the validation-is-test convention.
    pub fn records_in(&self, split: Split) -> Vec<&ClipRecord> {
        let stored = if split == Split::Val && self.val_is_test() {
            Split::Test
        } else {
            split
        };
        self.records
            .iter()
            .filter(|r| self.split_of[&r.clip_id] == stored)
            .collect()
    }

    pub fn patients(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.patient_id.as_str()).collect()
    }

    /// Reassigns splits, e.g. from [`super::stratified_split`].
    pub fn with_splits(self, split_of: BTreeMap<String, Split>) -> Result<Self, DatasetError> {
        Self::new(self.regime, self.records, split_of)
    }

    pub fn header(&self) -> ManifestHeader {
        ManifestHeader {
            kind: MANIFEST_KIND.into(),
            version: MANIFEST_VERSION,
            regime: self.regime,
            val_is_test: self.val_is_test(),
            records: self.records.len(),
        }
    }

    pub fn to_writer<W: Write>(&self, out: W) -> Result<(), DatasetError> {
        let mut out = BufWriter::new(out);
        serde_json::to_writer(&mut out, &self.header())?;
        out.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(
                &mut out,
                &Line {
                    record: r.clone(),
                    split: self.split_of[&r.clip_id],
                },
            )?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn from_reader<R: BufRead>(input: R) -> Result<Self, DatasetError> {
        let mut header: Option<ManifestHeader> = None;
        let mut records = Vec::new();
        let mut split_of = BTreeMap::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |e: serde_json::Error| DatasetError::Manifest {
                line: i + 1,
                message: e.to_string(),
            };
            if header.is_none() {
                let h: ManifestHeader = serde_json::from_str(&line).map_err(err)?;
                if h.kind != MANIFEST_KIND {
                    return Err(DatasetError::Manifest {
                        line: i + 1,
                        message: format!("not a manifest header (kind '{}')", h.kind),
                    });
                }
                header = Some(h);
                continue;
            }
            let l: Line = serde_json::from_str(&line).map_err(err)?;
            split_of.insert(l.record.clip_id.clone(), l.split);
            records.push(l.record);
        }
        let header = header.ok_or(DatasetError::Manifest {
            line: 0,
            message: "missing header".into(),
        })?;
        if header.records != records.len() {
            return Err(DatasetError::Manifest {
                line: 0,
                message: format!("header announces {} records, found {}", header.records, records.len()),
            });
        }
        let m = Self::new(header.regime, records, split_of)?;
        if m.val_is_test() != header.val_is_test {
            return Err(DatasetError::Manifest {
                line: 1,
                message: "val_is_test disagrees with the records".into(),
            });
        }
        Ok(m)
    }
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<(), DatasetError> {
    manifest.to_writer(File::create(path)?)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, DatasetError> {
    Manifest::from_reader(BufReader::new(File::open(path)?))
}

fn need<'a>(m: Option<&'a Manifest>, name: &str) -> Result<&'a Manifest, DatasetError> {
    m.ok_or_else(|| DatasetError::InvalidSource(format!("{name} source required for this regime")))
}

fn check_source(m: &Manifest, origin: Origin, allowed: &[Split], name: &str) -> Result<(), DatasetError> {
    for r in m.records() {
        if r.origin != origin {
            return Err(DatasetError::InvalidSource(format!(
                "{name} source contains {:?} clip '{}'",
                r.origin, r.clip_id
            )));
        }
        let s = m.split_of[&r.clip_id];
        if !allowed.contains(&s) {
            return Err(DatasetError::InvalidSource(format!(
                "{name} source puts clip '{}' in {}",
                r.clip_id,
                s.as_str()
            )));
        }
    }
    Ok(())
}

/// Combines source manifests into a training-regime manifest.
///
/// `real` holds real clips with their provided train/test splits; `synth`
/// holds rendered clips split into train/val.
///
/// - `Real`: the real source alone; validation uses the test set.
/// - `Synth`: all synthetic clips plus the real test clips.
/// - `Mixed`: the union of both sources with their splits kept.
pub fn build_manifest(
    regime: Regime,
    real: Option<&Manifest>,
    synth: Option<&Manifest>,
) -> Result<Manifest, DatasetError> {
    let real = need(real, "real")?;
    check_source(real, Origin::Real, &[Split::Train, Split::Test], "real")?;
    let mut records: Vec<ClipRecord> = Vec::new();
    let mut split_of = BTreeMap::new();
    let mut take = |r: &ClipRecord, s: Split| -> Result<(), DatasetError> {
        if split_of.insert(r.clip_id.clone(), s).is_some() {
            return Err(DatasetError::DuplicateClip(r.clip_id.clone()));
        }
        records.push(r.clone());
        Ok(())
    };
    match regime {
        Regime::Real => {
            for r in real.records() {
                take(r, real.split_of[&r.clip_id])?;
            }
        }
        Regime::Synth | Regime::Mixed => {
            let synth = need(synth, "synthetic")?;
            check_source(synth, Origin::Synthetic, &[Split::Train, Split::Val], "synthetic")?;
            for r in synth.records() {
                take(r, synth.split_of[&r.clip_id])?;
            }
            for r in real.records() {
                let s = real.split_of[&r.clip_id];
                if regime == Regime::Mixed || s == Split::Test {
                    take(r, s)?;
                }
            }
        }
    }
    Manifest::new(regime, records, split_of)
}
