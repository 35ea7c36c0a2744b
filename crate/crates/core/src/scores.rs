//! Per-segment metric scores and the scores TSV
//! (`lang_pair\tsystem_id\tsegment_id\tmetric\tscore`).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::corpus::{RatingsCorpus, SegmentKey};
use crate::error::{Error, Result};

pub const SCORES_HEADER: &str = "lang_pair\tsystem_id\tsegment_id\tmetric\tscore";

/// One metric's scores keyed by segment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    pub metric: String,
    pub scores: BTreeMap<SegmentKey, f64>,
}

impl ScoreSet {
    pub fn new(metric: impl Into<String>) -> Self {
        ScoreSet {
            metric: metric.into(),
            scores: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, key: SegmentKey, score: f64) {
        self.scores.insert(key, score);
    }

    pub fn get(&self, key: &SegmentKey) -> Option<f64> {
        self.scores.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Human ratings of `corpus` dressed up as a metric. Useful as a perfect
    /// reference column.
    pub fn from_human(corpus: &RatingsCorpus, metric: impl Into<String>) -> Self {
        ScoreSet {
            metric: metric.into(),
            scores: corpus.human_scores(),
        }
    }
}

impl FromIterator<(SegmentKey, f64)> for ScoreSet {
    fn from_iter<T: IntoIterator<Item = (SegmentKey, f64)>>(iter: T) -> Self {
        ScoreSet {
            metric: String::new(),
            scores: iter.into_iter().collect(),
        }
    }
}

pub fn scores_to_tsv(sets: &[ScoreSet]) -> String {
    let mut out = String::from(SCORES_HEADER);
    out.push('\n');
    for set in sets {
        for (key, score) in &set.scores {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                key.lang_pair, key.system_id, key.segment_id, set.metric, score
            );
        }
    }
    out
}

/// Parses a scores TSV into one set per metric, in first-seen order.
pub fn scores_from_tsv(text: &str) -> Result<Vec<ScoreSet>> {
    let mut sets: Vec<ScoreSet> = Vec::new();
    let mut header_seen = false;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != SCORES_HEADER {
                return Err(Error::parse(lineno, "missing or malformed scores header"));
            }
            header_seen = true;
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(Error::parse(lineno, format!("expected 5 fields, found {}", f.len())));
        }
        let segment_id: u64 = f[2]
            .parse()
            .map_err(|_| Error::parse(lineno, "segment_id is not an integer"))?;
        let score: f64 = f[4]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("score {:?} is not a number", f[4])))?;
        if !score.is_finite() {
            return Err(Error::parse(lineno, "score is not finite"));
        }
        let key = SegmentKey::new(f[0], segment_id, f[1]);
        let pos = match sets.iter().position(|s| s.metric == f[3]) {
            Some(p) => p,
            None => {
                sets.push(ScoreSet::new(f[3]));
                sets.len() - 1
            }
        };
        if sets[pos].scores.insert(key.clone(), score).is_some() {
            return Err(Error::DuplicateKey(format!("{key} metric {} (line {lineno})", f[3])));
        }
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_duplicates() {
        let mut a = ScoreSet::new("yisi1@std1");
        a.insert(SegmentKey::new("en-de", 1, "A"), 0.1 + 0.2);
        a.insert(SegmentKey::new("en-de", 2, "A"), -3.5e-7);
        let mut b = ScoreSet::new("head@std1");
        b.insert(SegmentKey::new("en-de", 1, "A"), 71.25);
        let text = scores_to_tsv(&[a.clone(), b.clone()]);
        assert_eq!(scores_from_tsv(&text).unwrap(), vec![a, b]);

        let dup = format!("{SCORES_HEADER}\nen-de\tA\t1\tm\t1\nen-de\tA\t1\tm\t2\n");
        assert!(matches!(scores_from_tsv(&dup), Err(Error::DuplicateKey(_))));
        let short = format!("{SCORES_HEADER}\nen-de\tA\t1\tm\n");
        assert!(matches!(scores_from_tsv(&short), Err(Error::Parse { line: 2, .. })));
    }
}
