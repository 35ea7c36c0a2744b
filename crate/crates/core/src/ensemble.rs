//! Per-segment combination of several prediction columns.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::corpus::SegmentKey;
use crate::error::{Error, Result};
use crate::scores::ScoreSet;

pub const ALL_COMB: &str = "all-comb";

/// Segments down, named prediction columns across. Cells may be missing
/// until [`PredictionMatrix::check_complete`] says otherwise.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionMatrix {
    columns: Vec<String>,
    rows: BTreeMap<SegmentKey, Vec<Option<f64>>>,
}

impl PredictionMatrix {
    /// Joins score sets on segment key, one column per set in the given
    /// order. Keys present in any set become rows.
    pub fn from_score_sets(sets: &[ScoreSet]) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in sets {
            if !seen.insert(s.metric.as_str()) {
                return Err(Error::DuplicateKey(format!("prediction column {:?}", s.metric)));
            }
        }
        let keys: BTreeSet<&SegmentKey> = sets.iter().flat_map(|s| s.scores.keys()).collect();
        let rows = keys
            .into_iter()
            .map(|k| (k.clone(), sets.iter().map(|s| s.get(k)).collect()))
            .collect();
        Ok(PredictionMatrix {
            columns: sets.iter().map(|s| s.metric.clone()).collect(),
            rows,
        })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn segment_count(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, key: &SegmentKey) -> Option<&[Option<f64>]> {
        self.rows.get(key).map(Vec::as_slice)
    }

    pub fn column(&self, name: &str) -> Option<ScoreSet> {
        let j = self.columns.iter().position(|c| c == name)?;
        let mut set = ScoreSet::new(name);
        for (k, row) in &self.rows {
            if let Some(v) = row[j] {
                set.insert(k.clone(), v);
            }
        }
        Some(set)
    }

    /// First missing cell in key order, as an error.
    pub fn check_complete(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::Argument("prediction matrix has no columns".into()));
        }
        for (k, row) in &self.rows {
            if let Some(j) = row.iter().position(Option::is_none) {
                return Err(Error::IncompleteMatrix {
                    segment: k.to_string(),
                    column: self.columns[j].clone(),
                });
            }
        }
        Ok(())
    }

    pub fn to_score_sets(&self) -> Vec<ScoreSet> {
        self.columns.iter().filter_map(|c| self.column(c)).collect()
    }
}

/// Mean that returns `x` exactly when every input equals `x`.
fn running_mean(values: &[f64]) -> f64 {
    let mut m = 0.0;
    for (k, &x) in values.iter().enumerate() {
        m += (x - m) / (k + 1) as f64;
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    m.clamp(lo, hi)
}

/// Unweighted per-segment mean of all columns, as the `all-comb` metric.
pub fn all_comb(matrix: &PredictionMatrix) -> Result<ScoreSet> {
    matrix.check_complete()?;
    let rows: Vec<(&SegmentKey, &Vec<Option<f64>>)> = matrix.rows.iter().collect();
    let scores: Vec<(SegmentKey, f64)> = rows
        .par_iter()
        .map(|(k, row)| {
            let vals: Vec<f64> = row.iter().map(|v| v.expect("checked complete")).collect();
            ((*k).clone(), running_mean(&vals))
        })
        .collect();
    let mut set: ScoreSet = scores.into_iter().collect();
    set.metric = ALL_COMB.into();
    Ok(set)
}

/// Standardizes every column to population mean 0 and variance 1.
pub fn zscore_columns(matrix: &PredictionMatrix) -> Result<PredictionMatrix> {
    matrix.check_complete()?;
    let n = matrix.rows.len() as f64;
    let mut out = matrix.clone();
    for (j, name) in matrix.columns.iter().enumerate() {
        let vals: Vec<f64> = matrix.rows.values().map(|r| r[j].expect("checked complete")).collect();
        let mean = crate::eval::compensated_sum(vals.iter().copied()) / n;
        let var = crate::eval::compensated_sum(vals.iter().map(|v| (v - mean) * (v - mean))) / n;
        let sd = var.sqrt();
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::DegenerateColumn(name.clone()));
        }
        for row in out.rows.values_mut() {
            if let Some(v) = row[j].as_mut() {
                *v = (*v - mean) / sd;
            }
        }
    }
    Ok(out)
}

/// Column names of the seven-prediction submission layout: YiSi-1 and the
/// head against each of the three references, plus YiSi-2 against the source.
pub fn submission_columns() -> Vec<String> {
    let mut cols = Vec::with_capacity(7);
    for metric in ["yisi1", "head"] {
        for r in SUBMISSION_REFERENCES {
            cols.push(format!("{metric}@{r}"));
        }
    }
    cols.push("yisi2@src".into());
    cols
}

pub const SUBMISSION_REFERENCES: [&str; 3] = ["std1", "std2", "para"];
