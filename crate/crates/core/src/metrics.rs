//! Binary classification metrics over prediction files: AUROC, F1,
//! accuracy and the weighted binary cross-entropy.
//!
//! Prediction files are CSV with the header `clip_id,label,score`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Probabilities are clamped to `[BCE_EPSILON, 1 - BCE_EPSILON]` before taking logs.
pub const BCE_EPSILON: f64 = 1e-7;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("AUROC is undefined without both positive and negative labels")]
    SingleClass,
    #[error("no prediction records")]
    Empty,
    #[error("class weights must be positive (got {0}, {1})")]
    InvalidWeight(f64, f64),
    #[error("prediction row {row}: {message}")]
    InvalidRecord { row: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub clip_id: String,
    pub label: u8,
    pub score: f64,
}

impl PredictionRecord {
    pub fn new(clip_id: impl Into<String>, label: u8, score: f64) -> Self {
        Self {
            clip_id: clip_id.into(),
            label,
            score,
        }
    }

    pub fn is_positive(&self) -> bool {
        self.label == 1
    }

    fn check(&self) -> Result<(), String> {
        if self.label > 1 {
            return Err(format!("label {} is not 0 or 1", self.label));
        }
        if !(self.score.is_finite() && (0.0..=1.0).contains(&self.score)) {
            return Err(format!("score {} outside [0, 1]", self.score));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    /// Predictions are `score >= threshold`.
    pub fn at(records: &[PredictionRecord], threshold: f64) -> Self {
        records.iter().fold(Self::default(), |mut c, r| {
            match (r.score >= threshold, r.is_positive()) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
            c
        })
    }

    /// `2TP / (2TP + FP + FN)`, 0 when there are no positives at all.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        let n = self.tp + self.fp + self.tn + self.fn_;
        if n == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / n as f64
        }
    }
}

/// Area under the ROC curve as the Mann-Whitney probability that a random
/// positive outscores a random negative, ties counting one half.
///
/// Runs in O(n log n): records are sorted once and each group of tied scores
/// contributes `pos * neg_below + pos * neg_tied / 2`. Counts are kept as
/// integers so the only rounding is the final division.
pub fn auroc(records: &[PredictionRecord]) -> Result<f64, MetricsError> {
    let mut scored: Vec<(f64, bool)> = records.iter().map(|r| (r.score, r.is_positive())).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));

    let (mut n_pos, mut n_neg) = (0u128, 0u128);
    let mut twice_wins = 0u128;
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < scored.len() && scored[j].0 == scored[i].0 {
            if scored[j].1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_wins += 2 * pos * n_neg + pos * neg;
        n_pos += pos;
        n_neg += neg;
        i = j;
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    Ok(twice_wins as f64 / (2 * n_pos * n_neg) as f64)
}

pub fn f1(records: &[PredictionRecord], threshold: f64) -> f64 {
    Confusion::at(records, threshold).f1()
}

/// Fraction of correct threshold decisions; 0 for an empty slice.
pub fn accuracy(records: &[PredictionRecord], threshold: f64) -> f64 {
    Confusion::at(records, threshold).accuracy()
}

/// Mean of `-(w_pos * y * ln p + w_neg * (1 - y) * ln(1 - p))` with `p`
/// clamped to `[1e-7, 1 - 1e-7]`.
pub fn weighted_bce(records: &[PredictionRecord], pos_weight: f64, neg_weight: f64) -> Result<f64, MetricsError> {
    if !(pos_weight > 0.0 && neg_weight > 0.0) {
        return Err(MetricsError::InvalidWeight(pos_weight, neg_weight));
    }
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let total: f64 = records
        .iter()
        .map(|r| {
            let p = r.score.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            if r.is_positive() {
                -pos_weight * p.ln()
            } else {
                -neg_weight * (1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / records.len() as f64)
}

/// Class weights `n / (2 * n_class)`, so each class carries half the total
/// loss mass. Returns `(pos_weight, neg_weight)`.
pub fn inverse_frequency_weights(labels: impl IntoIterator<Item = u8>) -> Result<(f64, f64), MetricsError> {
    let (mut pos, mut neg) = (0u64, 0u64);
    for l in labels {
        if l == 1 {
            pos += 1;
        } else {
            neg += 1;
        }
    }
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let n = (pos + neg) as f64;
    Ok((n / (2.0 * pos as f64), n / (2.0 * neg as f64)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auroc: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub threshold: f64,
    pub n_pos: u64,
    pub n_neg: u64,
}

pub fn evaluate(records: &[PredictionRecord], threshold: f64) -> Result<MetricReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let c = Confusion::at(records, threshold);
    Ok(MetricReport {
        auroc: auroc(records)?,
        f1: c.f1(),
        accuracy: c.accuracy(),
        threshold,
        n_pos: c.tp + c.fn_,
        n_neg: c.tn + c.fp,
    })
}

/// Reads a `clip_id,label,score` CSV, validating every row.
pub fn read_predictions<R: Read>(reader: R) -> Result<Vec<PredictionRecord>, MetricsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["clip_id", "label", "score"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(MetricsError::InvalidRecord {
            row: 0,
            message: format!("expected header clip_id,label,score, got {}", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<PredictionRecord>().enumerate() {
        let rec = row.map_err(|e| MetricsError::InvalidRecord {
            row: i + 1,
            message: e.to_string(),
        })?;
        rec.check()
            .map_err(|message| MetricsError::InvalidRecord { row: i + 1, message })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_predictions<W: Write>(writer: W, records: &[PredictionRecord]) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
