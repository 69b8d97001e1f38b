use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use super::{DatasetError, Strata};

/// The attributes splits are balanced on.
pub const STRATA_KEYS: [&str; 3] = ["gender", "age_bucket", "expressiveness"];

/// Buckets `<30`, `30-45`, `46-65`, `66+`.
pub fn age_bucket(age: f64) -> &'static str {
    if age < 30.0 {
        "<30"
    } else if age < 46.0 {
        "30-45"
    } else if age < 66.0 {
        "46-65"
    } else {
        "66+"
    }
}

/// A row of the strata table (`patient_id,gender,age,expressiveness`).
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct StrataRow {
    pub patient_id: String,
    pub gender: String,
    pub age: f64,
    pub expressiveness: String,
}

impl StrataRow {
    pub fn strata(&self) -> Strata {
        Strata {
            gender: self.gender.clone(),
            age_bucket: age_bucket(self.age).into(),
            expressiveness: self.expressiveness.clone(),
        }
    }
}

/// Strata per patient.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StrataTable {
    by_patient: HashMap<String, Strata>,
}

impl StrataTable {
    pub fn from_rows(rows: impl IntoIterator<Item = StrataRow>) -> Result<Self, DatasetError> {
        let mut by_patient = HashMap::new();
        for row in rows {
            if !row.age.is_finite() || row.age < 0.0 {
                return Err(DatasetError::InvalidSource(format!(
                    "patient '{}' has invalid age {}",
                    row.patient_id, row.age
                )));
            }
            if by_patient.insert(row.patient_id.clone(), row.strata()).is_some() {
                return Err(DatasetError::InvalidSource(format!(
                    "patient '{}' listed twice in strata table",
                    row.patient_id
                )));
            }
        }
        Ok(Self { by_patient })
    }

    pub fn get(&self, patient_id: &str) -> Result<&Strata, DatasetError> {
        self.by_patient
            .get(patient_id)
            .ok_or_else(|| DatasetError::MissingStrata(patient_id.into()))
    }

    pub fn len(&self) -> usize {
        self.by_patient.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_patient.is_empty()
    }
}

pub fn read_strata(path: &Path) -> Result<StrataTable, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let rows = reader.deserialize().collect::<Result<Vec<StrataRow>, _>>()?;
    StrataTable::from_rows(rows)
}
