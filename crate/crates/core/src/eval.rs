//! Agreement with human ratings.
//!
//! Segment level uses DARR: every pair of systems translating the same
//! segment whose direct-assessment scores differ by at least a threshold
//! becomes a relative-ranking pair, and the metric is scored by
//! `(concordant - discordant) / (concordant + discordant)`. A metric tie
//! counts as discordant. System level is Pearson's r between per-system mean
//! metric scores and per-system mean human scores.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::corpus::{RatingsCorpus, SegmentKey};
use crate::error::{Error, Result};
use crate::scores::ScoreSet;

pub const DEFAULT_DARR_THRESHOLD: f64 = 25.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DarrPair {
    pub lang_pair: String,
    pub segment_id: u64,
    pub better_system: String,
    pub worse_system: String,
    pub human_gap: f64,
}

impl DarrPair {
    fn better_key(&self) -> SegmentKey {
        SegmentKey::new(self.lang_pair.clone(), self.segment_id, self.better_system.clone())
    }

    fn worse_key(&self) -> SegmentKey {
        SegmentKey::new(self.lang_pair.clone(), self.segment_id, self.worse_system.clone())
    }
}

/// All system pairs per `(lang_pair, segment_id)` whose human scores differ
/// by at least `threshold` (and by more than zero). Unrated segments are
/// ignored.
pub fn extract_darr_pairs(corpus: &RatingsCorpus, threshold: f64) -> Result<Vec<DarrPair>> {
    if !(threshold >= 0.0) {
        return Err(Error::Argument(format!("DARR threshold {threshold} must be >= 0")));
    }
    let mut by_segment: BTreeMap<(&str, u64), Vec<(&str, f64)>> = BTreeMap::new();
    let mut systems = BTreeSet::new();
    for seg in corpus {
        if let Some(h) = seg.human_score {
            by_segment
                .entry((seg.lang_pair.as_str(), seg.segment_id))
                .or_default()
                .push((seg.system_id.as_str(), h));
            systems.insert(seg.system_id.as_str());
        }
    }
    if systems.len() < 2 {
        return Err(Error::InsufficientSystems(systems.len()));
    }

    let mut pairs = Vec::new();
    for ((lang_pair, segment_id), mut rated) in by_segment {
        rated.sort_by(|a, b| a.0.cmp(b.0));
        for (i, &(sys_a, h_a)) in rated.iter().enumerate() {
            for &(sys_b, h_b) in &rated[i + 1..] {
                let gap = (h_a - h_b).abs();
                if gap == 0.0 || gap < threshold {
                    continue;
                }
                let (better, worse) = if h_a > h_b { (sys_a, sys_b) } else { (sys_b, sys_a) };
                pairs.push(DarrPair {
                    lang_pair: lang_pair.to_owned(),
                    segment_id,
                    better_system: better.to_owned(),
                    worse_system: worse.to_owned(),
                    human_gap: gap,
                });
            }
        }
    }
    Ok(pairs)
}

pub fn kendall_darr(pairs: &[DarrPair], scores: &BTreeMap<SegmentKey, f64>) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::UndefinedCorrelation("no DARR pairs".into()));
    }
    let lookup = |k: SegmentKey| {
        scores
            .get(&k)
            .copied()
            .ok_or_else(|| Error::Lookup(format!("no metric score for {k}")))
    };
    let (mut concordant, mut discordant) = (0u64, 0u64);
    for p in pairs {
        if lookup(p.better_key())? > lookup(p.worse_key())? {
            concordant += 1;
        } else {
            discordant += 1;
        }
    }
    Ok((concordant as f64 - discordant as f64) / (concordant + discordant) as f64)
}

/// Grouping key for system-level scores.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SystemKey {
    pub lang_pair: String,
    pub system_id: String,
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Unweighted mean over each system's segments.
pub fn system_scores(scores: &BTreeMap<SegmentKey, f64>) -> Result<BTreeMap<SystemKey, f64>> {
    if scores.is_empty() {
        return Err(Error::Argument("no segment scores to aggregate".into()));
    }
    let mut grouped: BTreeMap<SystemKey, Vec<f64>> = BTreeMap::new();
    for (k, &v) in scores {
        grouped
            .entry(SystemKey {
                lang_pair: k.lang_pair.clone(),
                system_id: k.system_id.clone(),
            })
            .or_default()
            .push(v);
    }
    grouped
        .into_iter()
        .map(|(sys, vals)| {
            if vals.is_empty() {
                return Err(Error::Argument(format!("system {} has no segments", sys.system_id)));
            }
            let n = vals.len() as f64;
            Ok((sys, compensated_sum(vals) / n))
        })
        .collect()
}

/// Pearson's r in ratio form with compensated two-pass sums, clamped to
/// [-1, 1].
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Argument(format!("pearson on lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!("{} points", x.len())));
    }
    let n = x.len() as f64;
    let mx = compensated_sum(x.iter().copied()) / n;
    let my = compensated_sum(y.iter().copied()) / n;
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let sxx = compensated_sum(x.iter().map(|a| (a - mx) * (a - mx)));
    let syy = compensated_sum(y.iter().map(|b| (b - my) * (b - my)));
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    let r = sxy / (sxx * syy).sqrt();
    if !r.is_finite() {
        return Err(Error::UndefinedCorrelation("non-finite input".into()));
    }
    Ok(r.clamp(-1.0, 1.0))
}

/// Pearson between per-system mean metric scores and per-system mean human
/// scores, over the rated segments of `corpus`. Every rated segment must
/// have a metric score.
pub fn system_level_pearson(corpus: &RatingsCorpus, scores: &BTreeMap<SegmentKey, f64>) -> Result<f64> {
    let (_, r) = system_level(corpus, scores)?;
    Ok(r)
}

fn system_level(corpus: &RatingsCorpus, scores: &BTreeMap<SegmentKey, f64>) -> Result<(usize, f64)> {
    let human = corpus.human_scores();
    if human.is_empty() {
        return Err(Error::UndefinedCorrelation("no human scores".into()));
    }
    let metric = human
        .keys()
        .map(|k| {
            scores
                .get(k)
                .map(|&v| (k.clone(), v))
                .ok_or_else(|| Error::Lookup(format!("no metric score for {k}")))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    let human_sys = system_scores(&human)?;
    let metric_sys = system_scores(&metric)?;
    let xs: Vec<f64> = metric_sys.values().copied().collect();
    let ys: Vec<f64> = human_sys.values().copied().collect();
    Ok((xs.len(), pearson(&xs, &ys)?))
}

/// A report cell: a value or the reason it could not be computed.
pub type Cell = std::result::Result<f64, String>;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub lang_pair: String,
    pub metric: String,
    pub seg_darr: Cell,
    pub sys_pearson: Cell,
    pub pair_count: usize,
    pub system_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    /// Sorted by `(lang_pair, metric)`.
    pub rows: Vec<ReportRow>,
    /// One row per metric with `lang_pair = "avg"`: the mean over language
    /// pairs whose cell is available, counts summed.
    pub averages: Vec<ReportRow>,
}

pub const REPORT_CSV_HEADER: &str = "lang_pair,metric,seg_darr,sys_pearson,pair_count,system_count";
pub const AVG_LABEL: &str = "avg";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn cell_csv(c: &Cell) -> String {
    match c {
        Ok(v) => v.to_string(),
        Err(reason) => csv_field(&format!("n/a ({reason})")),
    }
}

fn cell_short(c: &Cell) -> String {
    match c {
        Ok(v) => format!("{v:.3}"),
        Err(_) => "n/a".into(),
    }
}

impl CorrelationReport {
    pub fn row(&self, lang_pair: &str, metric: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .chain(&self.averages)
            .find(|r| r.lang_pair == lang_pair && r.metric == metric)
    }

    pub fn metrics(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.rows.iter().map(|r| r.metric.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{REPORT_CSV_HEADER}\n");
        for r in self.rows.iter().chain(&self.averages) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&r.lang_pair),
                csv_field(&r.metric),
                cell_csv(&r.seg_darr),
                cell_csv(&r.sys_pearson),
                r.pair_count,
                r.system_count
            );
        }
        out
    }

    /// Aligned text tables (metrics down, language pairs across, `avg` last),
    /// one for each level, followed by the reasons for any `n/a` cell.
    pub fn to_table(&self) -> String {
        let lang_pairs: Vec<String> = {
            let set: BTreeSet<&str> = self.rows.iter().map(|r| r.lang_pair.as_str()).collect();
            set.into_iter().map(str::to_owned).collect()
        };
        let metrics = self.metrics();
        let name_w = metrics.iter().map(String::len).max().unwrap_or(6).max(6);
        let mut cols = lang_pairs.clone();
        cols.push(AVG_LABEL.into());
        let col_w = cols.iter().map(String::len).max().unwrap_or(0).max(7);

        let mut out = String::new();
        let blocks: [(&str, fn(&ReportRow) -> &Cell); 2] = [
            ("Segment-level DARR", |r| &r.seg_darr),
            ("System-level Pearson", |r| &r.sys_pearson),
        ];
        for (title, pick) in blocks {
            let _ = writeln!(out, "{title}");
            let _ = write!(out, "{:<name_w$}", "metric");
            for c in &cols {
                let _ = write!(out, "  {c:>col_w$}");
            }
            out.push('\n');
            for m in &metrics {
                let _ = write!(out, "{m:<name_w$}");
                for c in &cols {
                    let v = self.row(c, m).map(|r| cell_short(pick(r))).unwrap_or_else(|| "-".into());
                    let _ = write!(out, "  {v:>col_w$}");
                }
                out.push('\n');
            }
            out.push('\n');
        }
        let notes: Vec<String> = self
            .rows
            .iter()
            .flat_map(|r| {
                [("seg_darr", &r.seg_darr), ("sys_pearson", &r.sys_pearson)]
                    .into_iter()
                    .filter_map(move |(what, c)| {
                        c.as_ref()
                            .err()
                            .map(|e| format!("{} {} {what}: {e}", r.lang_pair, r.metric))
                    })
            })
            .collect();
        if !notes.is_empty() {
            out.push_str("n/a cells:\n");
            for n in notes {
                let _ = writeln!(out, "  {n}");
            }
        }
        out
    }
}

fn average(cells: &[&Cell]) -> Cell {
    let vals: Vec<f64> = cells.iter().filter_map(|c| c.as_ref().ok().copied()).collect();
    if vals.is_empty() {
        return Err("no language pair available".into());
    }
    Ok(compensated_sum(vals.iter().copied()) / vals.len() as f64)
}

/// Segment DARR and system Pearson for every `(lang_pair, metric)`. Cells
/// that cannot be computed are kept as `n/a` with their reason.
pub fn build_report(corpus: &RatingsCorpus, score_sets: &[ScoreSet], threshold: f64) -> Result<CorrelationReport> {
    if score_sets.is_empty() {
        return Err(Error::Argument("no metric score sets to evaluate".into()));
    }
    if !(threshold >= 0.0) {
        return Err(Error::Argument(format!("DARR threshold {threshold} must be >= 0")));
    }
    let mut seen = BTreeSet::new();
    for s in score_sets {
        if !seen.insert(s.metric.as_str()) {
            return Err(Error::DuplicateKey(format!("metric {}", s.metric)));
        }
    }

    let per_lp: Vec<(String, RatingsCorpus, std::result::Result<Vec<DarrPair>, String>)> = corpus
        .lang_pairs()
        .into_iter()
        .map(|lp| {
            let sub = corpus.filter_lang_pair(&lp);
            let pairs = extract_darr_pairs(&sub, threshold).map_err(|e| e.to_string());
            (lp, sub, pairs)
        })
        .collect();

    let jobs: Vec<(usize, &ScoreSet)> = (0..per_lp.len())
        .flat_map(|i| score_sets.iter().map(move |s| (i, s)))
        .collect();
    let mut rows: Vec<ReportRow> = jobs
        .par_iter()
        .map(|&(i, set)| {
            let (lp, sub, pairs) = &per_lp[i];
            let (seg_darr, pair_count) = match pairs {
                Ok(p) => (kendall_darr(p, &set.scores).map_err(|e| e.to_string()), p.len()),
                Err(e) => (Err(e.clone()), 0),
            };
            let (sys_pearson, system_count) = match system_level(sub, &set.scores) {
                Ok((n, r)) => (Ok(r), n),
                Err(e) => {
                    let n = sub
                        .iter()
                        .filter(|s| s.human_score.is_some())
                        .map(|s| s.system_id.as_str())
                        .collect::<BTreeSet<_>>()
                        .len();
                    (Err(e.to_string()), n)
                }
            };
            ReportRow {
                lang_pair: lp.clone(),
                metric: set.metric.clone(),
                seg_darr,
                sys_pearson,
                pair_count,
                system_count,
            }
        })
        .collect();
    rows.sort_by(|a, b| (&a.lang_pair, &a.metric).cmp(&(&b.lang_pair, &b.metric)));

    let mut averages: Vec<ReportRow> = score_sets
        .iter()
        .map(|set| {
            let mine: Vec<&ReportRow> = rows.iter().filter(|r| r.metric == set.metric).collect();
            ReportRow {
                lang_pair: AVG_LABEL.into(),
                metric: set.metric.clone(),
                seg_darr: average(&mine.iter().map(|r| &r.seg_darr).collect::<Vec<_>>()),
                sys_pearson: average(&mine.iter().map(|r| &r.sys_pearson).collect::<Vec<_>>()),
                pair_count: mine.iter().map(|r| r.pair_count).sum(),
                system_count: mine.iter().map(|r| r.system_count).sum(),
            }
        })
        .collect();
    averages.sort_by(|a, b| a.metric.cmp(&b.metric));
    Ok(CorrelationReport { rows, averages })
}
