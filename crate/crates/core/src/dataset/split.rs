use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClipRecord, DatasetError, Split, STRATA_KEYS};
use crate::texture::shuffle;

pub const DEFAULT_TOLERANCE: f64 = 0.05;
const MAX_REFINE_PASSES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    /// Target share of records per split; normalized to sum to one.
    pub ratios: Vec<(Split, f64)>,
    pub keys: Vec<String>,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            ratios: vec![(Split::Train, 0.8), (Split::Val, 0.2)],
            keys: STRATA_KEYS.iter().map(|k| k.to_string()).collect(),
            tolerance: DEFAULT_TOLERANCE,
            seed: 0,
        }
    }
}

/// Share of a stratum value inside one split versus over all records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumDeviation {
    pub key: String,
    pub value: String,
    pub split: Split,
    pub overall: f64,
    pub in_split: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitOutcome {
    pub split_of: BTreeMap<String, Split>,
    pub patient_split: BTreeMap<String, Split>,
    pub deviations: Vec<StratumDeviation>,
    pub max_deviation: f64,
    /// Raised when the tolerance could not be met or the input is too small
    /// for every stratum to reach every split.
    pub best_effort: bool,
    pub warnings: Vec<String>,
}

/// Per (key, value, split) shares for an assignment, measured over records.
/// Empty splits are skipped.
pub fn stratum_deviations(
    records: &[ClipRecord],
    split_of: &BTreeMap<String, Split>,
    keys: &[String],
) -> Vec<StratumDeviation> {
    let n = records.len() as f64;
    let mut split_sizes: BTreeMap<Split, usize> = BTreeMap::new();
    let mut overall: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    let mut within: BTreeMap<(&str, &str, Split), usize> = BTreeMap::new();
    for r in records {
        let s = split_of[&r.clip_id];
        *split_sizes.entry(s).or_default() += 1;
        for k in keys {
            let v = r.strata.get(k).unwrap_or("");
            *overall.entry((k, v)).or_default() += 1;
            *within.entry((k, v, s)).or_default() += 1;
        }
    }
    let mut out = Vec::new();
    for (&(k, v), &count) in &overall {
        for (&s, &size) in &split_sizes {
            let o = count as f64 / n;
            let i = within.get(&(k, v, s)).copied().unwrap_or(0) as f64 / size as f64;
            out.push(StratumDeviation {
                key: k.into(),
                value: v.into(),
                split: s,
                overall: o,
                in_split: i,
                deviation: (i - o).abs(),
            });
        }
    }
    out
}

pub fn max_deviation(deviations: &[StratumDeviation]) -> f64 {
    deviations.iter().map(|d| d.deviation).fold(0.0, f64::max)
}

struct Patient {
    id: String,
    weight: usize,
    /// Value index per key.
    values: Vec<usize>,
}

/// Counts per split used by the greedy pass and the swap refinement.
struct Tally {
    size: Vec<f64>,
    /// `[split][key][value]`
    counts: Vec<Vec<Vec<f64>>>,
    overall: Vec<Vec<f64>>,
    total: f64,
}

impl Tally {
    fn add(&mut self, s: usize, p: &Patient, sign: f64) {
        let w = p.weight as f64 * sign;
        self.size[s] += w;
        for (k, &v) in p.values.iter().enumerate() {
            self.counts[s][k][v] += w;
        }
    }

    /// (max deviation, sum of squared deviations) over non-empty splits.
    fn objective(&self) -> (f64, f64) {
        let mut max = 0.0f64;
        let mut sq = 0.0;
        for (s, counts) in self.counts.iter().enumerate() {
            if self.size[s] <= 0.0 {
                continue;
            }
            for (k, per_value) in counts.iter().enumerate() {
                for (v, c) in per_value.iter().enumerate() {
                    let d = (c / self.size[s] - self.overall[k][v] / self.total).abs();
                    max = max.max(d);
                    sq += d * d;
                }
            }
        }
        (max, sq)
    }
}

/// Patient-level stratified split.
///
/// Patients are visited in a seeded order and each goes to the split whose
/// size and strata counts fall furthest below target, relative to the
/// target. Pairwise patient swaps between splits then run while they lower
/// the largest per-stratum share deviation. All clips of a patient share a
/// split.
pub fn stratified_split(records: &[ClipRecord], options: &SplitOptions) -> Result<SplitOutcome, DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::Split("no records".into()));
    }
    let ratios = normalized_ratios(&options.ratios)?;
    for k in &options.keys {
        if records[0].strata.get(k).is_none() {
            return Err(DatasetError::Split(format!("unknown strata key '{k}'")));
        }
    }

    let mut value_ids: Vec<HashMap<String, usize>> = vec![HashMap::new(); options.keys.len()];
    let mut patients: BTreeMap<&str, Patient> = BTreeMap::new();
    for r in records {
        let values: Vec<usize> = options
            .keys
            .iter()
            .zip(value_ids.iter_mut())
            .map(|(k, ids)| {
                let v = r.strata.get(k).expect("key checked");
                let next = ids.len();
                *ids.entry(v.to_string()).or_insert(next)
            })
            .collect();
        let p = patients.entry(&r.patient_id).or_insert_with(|| Patient {
            id: r.patient_id.clone(),
            weight: 0,
            values: values.clone(),
        });
        if p.values != values {
            return Err(DatasetError::Split(format!(
                "patient '{}' has clips with differing strata",
                r.patient_id
            )));
        }
        p.weight += 1;
    }
    let mut order: Vec<Patient> = patients.into_values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    shuffle(&mut order, &mut rng);

    let n_splits = ratios.len();
    let mut overall: Vec<Vec<f64>> = value_ids.iter().map(|ids| vec![0.0; ids.len()]).collect();
    for p in &order {
        for (k, &v) in p.values.iter().enumerate() {
            overall[k][v] += p.weight as f64;
        }
    }
    let total = records.len() as f64;
    let mut tally = Tally {
        size: vec![0.0; n_splits],
        counts: vec![overall.iter().map(|vals| vec![0.0; vals.len()]).collect(); n_splits],
        overall: overall.clone(),
        total,
    };

    let mut warnings = Vec::new();
    let mut best_effort = false;
    let active = ratios.iter().filter(|(_, r)| *r > 0.0).count();
    if order.len() < active {
        warnings.push(format!("{} patient(s) cannot fill {active} splits", order.len()));
        best_effort = true;
    }
    for (k, key) in options.keys.iter().enumerate() {
        let mut per_value = vec![0usize; value_ids[k].len()];
        for p in &order {
            per_value[p.values[k]] += 1;
        }
        for (value, &id) in &value_ids[k] {
            if per_value[id] < active {
                warnings.push(format!(
                    "stratum {key}={value} has {} patient(s), fewer than {active} splits",
                    per_value[id]
                ));
                best_effort = true;
            }
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let mut assigned = vec![0usize; order.len()];
    for (i, p) in order.iter().enumerate() {
        let mut best = (f64::NEG_INFINITY, 0);
        for (s, (_, ratio)) in ratios.iter().enumerate() {
            if *ratio <= 0.0 {
                continue;
            }
            let target = ratio * total;
            let mut score = (target - tally.size[s]) / target;
            for (k, &v) in p.values.iter().enumerate() {
                let t = ratio * overall[k][v];
                score += (t - tally.counts[s][k][v]) / t;
            }
            if score > best.0 {
                best = (score, s);
            }
        }
        assigned[i] = best.1;
        tally.add(best.1, p, 1.0);
    }

    refine(&order, &mut assigned, &mut tally);

    let patient_split: BTreeMap<String, Split> = order
        .iter()
        .zip(&assigned)
        .map(|(p, &s)| (p.id.clone(), ratios[s].0))
        .collect();
    let split_of: BTreeMap<String, Split> = records
        .iter()
        .map(|r| (r.clip_id.clone(), patient_split[&r.patient_id]))
        .collect();
    let deviations = stratum_deviations(records, &split_of, &options.keys);
    let max_dev = max_deviation(&deviations);
    if max_dev > options.tolerance {
        warnings.push(format!(
            "largest stratum deviation {max_dev:.4} exceeds tolerance {}",
            options.tolerance
        ));
        best_effort = true;
    }
    Ok(SplitOutcome {
        split_of,
        patient_split,
        deviations,
        max_deviation: max_dev,
        best_effort,
        warnings,
    })
}

fn refine(order: &[Patient], assigned: &mut [usize], tally: &mut Tally) {
    let mut current = tally.objective();
    for _ in 0..MAX_REFINE_PASSES {
        let mut improved = false;
        for i in 0..order.len() {
            for j in (i + 1)..order.len() {
                let (a, b) = (assigned[i], assigned[j]);
                if a == b || order[i].values == order[j].values {
                    continue;
                }
                tally.add(a, &order[i], -1.0);
                tally.add(b, &order[j], -1.0);
                tally.add(b, &order[i], 1.0);
                tally.add(a, &order[j], 1.0);
                let candidate = tally.objective();
                if candidate.0 < current.0 - 1e-12 || (candidate.0 <= current.0 + 1e-12 && candidate.1 < current.1 - 1e-12) {
                    assigned.swap(i, j);
                    current = candidate;
                    improved = true;
                } else {
                    tally.add(b, &order[i], -1.0);
                    tally.add(a, &order[j], -1.0);
                    tally.add(a, &order[i], 1.0);
                    tally.add(b, &order[j], 1.0);
                }
            }
        }
        if !improved {
            break;
        }
    }
}

fn normalized_ratios(ratios: &[(Split, f64)]) -> Result<Vec<(Split, f64)>, DatasetError> {
    if ratios.is_empty() {
        return Err(DatasetError::Split("no split ratios".into()));
    }
    let mut seen = Vec::new();
    for (s, r) in ratios {
        if !r.is_finite() || *r < 0.0 {
            return Err(DatasetError::Split(format!("invalid ratio {r} for {}", s.as_str())));
        }
        if seen.contains(s) {
            return Err(DatasetError::Split(format!("split {} listed twice", s.as_str())));
        }
        seen.push(*s);
    }
    let sum: f64 = ratios.iter().map(|(_, r)| r).sum();
    if sum <= 0.0 {
        return Err(DatasetError::Split("ratios sum to zero".into()));
    }
    Ok(ratios.iter().map(|(s, r)| (*s, r / sum)).collect())
}
