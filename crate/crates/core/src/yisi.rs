//! YiSi-style embedding metrics.
//!
//! Each candidate token is greedily aligned to its most similar reference
//! token (and vice versa) by cosine; IDF-weighted averages of those maxima
//! give precision and recall, which are folded into
//! `F_alpha = P*R / (alpha*P + (1-alpha)*R)`. At `alpha = 1` the score is the
//! recall, at `alpha = 0` the precision.
//!
//! * YiSi-1 compares the candidate with one labeled reference.
//! * YiSi-2 compares the candidate with the source (reference-free); the
//!   store must hold both languages.
//! * YiSi-comb takes the minimum recall and maximum precision over several
//!   references before applying `F_alpha`.
//!
//! Negative cosines are kept as they are, so scores can go below zero.

use std::collections::BTreeMap;

use crate::corpus::{RatedSegment, RatingsCorpus, SegmentKey, Sentence};
use crate::embedding::{EmbeddingStore, IdfTable, SentenceEmbedding};
use crate::error::{Error, Result};
use crate::eval::{extract_darr_pairs, kendall_darr, system_level_pearson};

pub const DEFAULT_ALPHA: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
}

impl PrecisionRecall {
    pub fn new(precision: f64, recall: f64) -> Self {
        PrecisionRecall { precision, recall }
    }

    pub fn f_alpha(&self, alpha: f64) -> Result<f64> {
        f_alpha(*self, alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YiSiMode {
    ReferenceBased,
    SourceBased,
}

#[derive(Debug, Clone, Copy)]
pub struct YiSiConfig<'a> {
    pub alpha: f64,
    pub idf: &'a IdfTable,
    pub store: &'a EmbeddingStore,
    pub mode: YiSiMode,
}

impl<'a> YiSiConfig<'a> {
    pub fn new(alpha: f64, idf: &'a IdfTable, store: &'a EmbeddingStore, mode: YiSiMode) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(YiSiConfig {
            alpha,
            idf,
            store,
            mode,
        })
    }

    fn require(&self, mode: YiSiMode) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.mode != mode {
            return Err(Error::Argument(format!(
                "metric needs {mode:?} mode, config is {:?}",
                self.mode
            )));
        }
        Ok(())
    }

    fn embedding(&self, sentence: &Sentence) -> Result<&'a SentenceEmbedding> {
        self.store.lookup(sentence)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::Argument(format!("alpha {alpha} outside [0, 1]")))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Argument(format!(
            "cosine of vectors with dims {} and {}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Greedy unigram alignment in both directions, IDF-weighted on both sides
/// with the same table.
pub fn precision_recall(
    candidate: &SentenceEmbedding,
    reference: &SentenceEmbedding,
    idf: &IdfTable,
) -> Result<PrecisionRecall> {
    if candidate.dim() != reference.dim() {
        return Err(Error::Argument(format!(
            "candidate dim {} differs from reference dim {}",
            candidate.dim(),
            reference.dim()
        )));
    }
    if candidate.is_empty() || reference.is_empty() {
        return Err(Error::Argument("cannot score an empty sentence".into()));
    }

    // sims[i][j] = cos(candidate_i, reference_j)
    let sims: Vec<Vec<f64>> = candidate
        .rows()
        .map(|c| reference.rows().map(|r| cosine(c, r)).collect::<Result<_>>())
        .collect::<Result<_>>()?;

    let precision = weighted_mean(
        candidate
            .tokens()
            .iter()
            .zip(&sims)
            .map(|(t, row)| (idf.weight(t), row.iter().copied().fold(f64::NEG_INFINITY, f64::max))),
    )?;
    let recall = weighted_mean(reference.tokens().iter().enumerate().map(|(j, t)| {
        let best = sims.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max);
        (idf.weight(t), best)
    }))?;
    Ok(PrecisionRecall { precision, recall })
}

fn weighted_mean(items: impl Iterator<Item = (f64, f64)>) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (w, x) in items {
        num += w * x;
        den += w;
    }
    if den <= 0.0 || !den.is_finite() {
        return Err(Error::Argument(format!("token weights sum to {den}")));
    }
    Ok(num / den)
}

/// `P*R / (alpha*P + (1-alpha)*R)`; exactly `R` at `alpha = 1`, exactly `P`
/// at `alpha = 0`, exactly `P` when `P = R`.
pub fn f_alpha(pr: PrecisionRecall, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let PrecisionRecall { precision: p, recall: r } = pr;
    if !p.is_finite() || !r.is_finite() {
        return Err(Error::DegenerateScore {
            precision: p,
            recall: r,
        });
    }
    if alpha == 1.0 {
        return Ok(r);
    }
    if alpha == 0.0 || p == r {
        return Ok(p);
    }
    let denom = alpha * p + (1.0 - alpha) * r;
    if denom == 0.0 {
        if p == 0.0 && r == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::DegenerateScore {
            precision: p,
            recall: r,
        });
    }
    Ok(p * r / denom)
}

fn reference<'s>(segment: &'s RatedSegment, label: &str) -> Result<&'s Sentence> {
    segment.references.get(label).ok_or_else(|| {
        Error::Lookup(format!("segment {} has no reference {label:?}", segment.key()))
    })
}

/// Raw (P, R) of the candidate against one labeled reference.
pub fn yisi1_pr(segment: &RatedSegment, ref_label: &str, config: &YiSiConfig) -> Result<PrecisionRecall> {
    config.require(YiSiMode::ReferenceBased)?;
    let cand = config.embedding(&segment.candidate)?;
    let refr = config.embedding(reference(segment, ref_label)?)?;
    precision_recall(cand, refr, config.idf)
}

pub fn score_yisi1(segment: &RatedSegment, ref_label: &str, config: &YiSiConfig) -> Result<f64> {
    f_alpha(yisi1_pr(segment, ref_label, config)?, config.alpha)
}

/// Raw (P, R) of the candidate against the source sentence.
pub fn yisi2_pr(segment: &RatedSegment, config: &YiSiConfig) -> Result<PrecisionRecall> {
    config.require(YiSiMode::SourceBased)?;
    let cand = config.embedding(&segment.candidate)?;
    let src = config.embedding(&segment.source)?;
    precision_recall(cand, src, config.idf)
}

pub fn score_yisi2(segment: &RatedSegment, config: &YiSiConfig) -> Result<f64> {
    f_alpha(yisi2_pr(segment, config)?, config.alpha)
}

/// Multi-reference (P, R): maximum precision and minimum recall over the
/// labeled references. Alpha is not applied here.
pub fn yisi_comb_pr(segment: &RatedSegment, labels: &[&str], config: &YiSiConfig) -> Result<PrecisionRecall> {
    if labels.is_empty() {
        return Err(Error::Argument("yisi-comb needs at least one reference label".into()));
    }
    let mut combined = PrecisionRecall::new(f64::NEG_INFINITY, f64::INFINITY);
    for label in labels {
        let pr = yisi1_pr(segment, label, config)?;
        combined.precision = combined.precision.max(pr.precision);
        combined.recall = combined.recall.min(pr.recall);
    }
    Ok(combined)
}

pub fn yisi_comb(segment: &RatedSegment, labels: &[&str], config: &YiSiConfig) -> Result<f64> {
    f_alpha(yisi_comb_pr(segment, labels, config)?, config.alpha)
}

/// Correlation level used by [`sweep_alpha`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    /// DARR Kendall-like tau over relative-ranking pairs.
    Segment,
    /// Pearson over per-system mean scores.
    System,
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "segment" => Ok(Level::Segment),
            "system" => Ok(Level::System),
            other => Err(Error::Argument(format!("unknown level {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSweep {
    /// `(alpha, correlation)` in grid order.
    pub rows: Vec<(f64, f64)>,
    /// First grid point reaching the maximum correlation.
    pub best_alpha: f64,
    pub best_correlation: f64,
}

impl AlphaSweep {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,correlation\n");
        for (a, c) in &self.rows {
            out.push_str(&format!("{a},{c}\n"));
        }
        out
    }
}

/// Recomputes `F_alpha` from cached (P, R) pairs for each grid value and
/// correlates it with the human scores of `corpus`.
pub fn sweep_alpha(
    cached: &BTreeMap<SegmentKey, PrecisionRecall>,
    corpus: &RatingsCorpus,
    grid: &[f64],
    level: Level,
    darr_threshold: f64,
) -> Result<AlphaSweep> {
    if grid.is_empty() {
        return Err(Error::Argument("alpha grid is empty".into()));
    }
    grid.iter().try_for_each(|&a| check_alpha(a))?;
    let pairs = match level {
        Level::Segment => Some(extract_darr_pairs(corpus, darr_threshold)?),
        Level::System => None,
    };

    let mut rows = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let scores = cached
            .iter()
            .map(|(k, pr)| Ok((k.clone(), f_alpha(*pr, alpha)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let corr = match &pairs {
            Some(p) => kendall_darr(p, &scores)?,
            None => system_level_pearson(corpus, &scores)?,
        };
        rows.push((alpha, corr));
    }
    let (best_alpha, best_correlation) = rows
        .iter()
        .copied()
        .fold((f64::NAN, f64::NEG_INFINITY), |best, row| if row.1 > best.1 { row } else { best });
    Ok(AlphaSweep {
        rows,
        best_alpha,
        best_correlation,
    })
}

/// Evenly spaced grid `start, start+step, ..., end`, computed by index so
/// the endpoints are exact.
pub fn alpha_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(end >= start) || !start.is_finite() || !end.is_finite() {
        return Err(Error::Argument(format!("bad grid {start}:{end}:{step}")));
    }
    let n = ((end - start) / step).round() as usize;
    if n == 0 {
        return Ok(vec![start]);
    }
    Ok((0..=n)
        .map(|i| start + (end - start) * i as f64 / n as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ReferenceSet;
    use crate::embedding::compute_idf;

    fn emb(tokens: &[&str], rows: &[&[f64]]) -> SentenceEmbedding {
        let dim = rows[0].len();
        SentenceEmbedding::new(
            tokens.iter().map(|s| s.to_string()).collect(),
            dim,
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
            None,
            "hand",
            0,
        )
        .unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[3.0, -1.0, 2.0], &[3.0, -1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::UndefinedSimilarity)));
        assert!(matches!(cosine(&[1.0], &[1.0, 0.0]), Err(Error::Argument(_))));
    }

    #[test]
    fn identical_and_orthogonal_sentences() {
        let idf = IdfTable::uniform();
        let a = emb(&["x", "y"], &[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0]]);
        let pr = precision_recall(&a, &a, &idf).unwrap();
        assert_eq!((pr.precision, pr.recall), (1.0, 1.0));
        let b = emb(&["u", "v", "w"], &[&[0.0, 0.0, 1.0, 0.0], &[0.0, 0.0, 0.0, 1.0], &[0.0, 0.0, 0.6, 0.8]]);
        let pr = precision_recall(&a, &b, &idf).unwrap();
        assert_eq!((pr.precision, pr.recall), (0.0, 0.0));
    }

    #[test]
    fn two_by_three_matches_exhaustive_hand_computation() {
        // candidate c1=(1,0), c2=(0,1); reference r1=(1,1), r2=(1,0), r3=(-1,0)
        // cos table: c1: [1/sqrt2, 1, -1]; c2: [1/sqrt2, 0, 0]
        // P = (1 + 1/sqrt2) / 2; R = (1/sqrt2 + 1 + 0) / 3
        let c = emb(&["a", "b"], &[&[1.0, 0.0], &[0.0, 1.0]]);
        let r = emb(&["p", "q", "s"], &[&[1.0, 1.0], &[1.0, 0.0], &[-1.0, 0.0]]);
        let pr = precision_recall(&c, &r, &IdfTable::uniform()).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((pr.precision - (1.0 + h) / 2.0).abs() < 1e-15);
        assert!((pr.recall - (h + 1.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_sentence_rejected() {
        let c = SentenceEmbedding::new(vec![], 2, vec![], None, "hand", 0).unwrap();
        let r = emb(&["p"], &[&[1.0, 0.0]]);
        assert!(matches!(precision_recall(&c, &r, &IdfTable::uniform()), Err(Error::Argument(_))));
    }

    #[test]
    fn f_alpha_examples() {
        let pr = PrecisionRecall::new(0.3, 0.9);
        assert_eq!(f_alpha(pr, 1.0).unwrap(), 0.9);
        assert_eq!(f_alpha(pr, 0.0).unwrap(), 0.3);
        for a in [0.0, 0.3, 0.7, 1.0] {
            assert_eq!(f_alpha(PrecisionRecall::new(0.5, 0.5), a).unwrap(), 0.5);
        }
        let v = f_alpha(PrecisionRecall::new(0.8, 0.4), 0.7).unwrap();
        assert!((v - 0.32 / 0.68).abs() < 1e-12);
        assert!((v - 0.470_588).abs() < 1e-6);
        assert_eq!(f_alpha(PrecisionRecall::new(0.0, 0.0), 0.4).unwrap(), 0.0);
        assert!(matches!(
            f_alpha(PrecisionRecall::new(0.5, -0.5), 0.5),
            Err(Error::DegenerateScore { .. })
        ));
        assert!(matches!(f_alpha(pr, 1.5), Err(Error::Argument(_))));
    }

    fn segment(refs: &[(&str, &str)], cand: &str, src: &str) -> RatedSegment {
        let tok = |s: &str| Sentence::from_tokens(s.split_whitespace());
        let mut references = ReferenceSet::new();
        for (l, t) in refs {
            references.insert(*l, tok(t)).unwrap();
        }
        RatedSegment {
            lang_pair: "en-de".into(),
            segment_id: 0,
            system_id: "A".into(),
            source: tok(src),
            candidate: tok(cand),
            references,
            human_score: Some(50.0),
        }
    }

    fn store_for(seg: &RatedSegment) -> EmbeddingStore {
        let mut sents = vec![seg.source.clone(), seg.candidate.clone()];
        sents.extend(seg.references.iter().map(|(_, s)| s.clone()));
        EmbeddingStore::toy(&sents, 32, 4).unwrap()
    }

    #[test]
    fn yisi1_identity_and_alpha_one() {
        let seg = segment(&[("std1", "das ist gut"), ("para", "dies ist fein")], "das ist gut", "that is good");
        let store = store_for(&seg);
        let idf = compute_idf(&seg.references.iter().map(|(_, s)| s.clone()).collect::<Vec<_>>()).unwrap();
        let cfg = YiSiConfig::new(0.7, &idf, &store, YiSiMode::ReferenceBased).unwrap();
        assert!((score_yisi1(&seg, "std1", &cfg).unwrap() - 1.0).abs() < 1e-12);
        let cfg1 = YiSiConfig { alpha: 1.0, ..cfg };
        let pr = yisi1_pr(&seg, "para", &cfg1).unwrap();
        assert_eq!(score_yisi1(&seg, "para", &cfg1).unwrap(), pr.recall);
        assert!(matches!(score_yisi1(&seg, "std9", &cfg), Err(Error::Lookup(_))));
        assert!(matches!(score_yisi2(&seg, &cfg), Err(Error::Argument(_))));
    }

    #[test]
    fn yisi2_self_match_and_orthogonal() {
        let seg = segment(&[("std1", "x")], "gleich wie quelle", "gleich wie quelle");
        let store = store_for(&seg);
        let idf = IdfTable::uniform();
        let cfg = YiSiConfig::new(0.7, &idf, &store, YiSiMode::SourceBased).unwrap();
        assert!((score_yisi2(&seg, &cfg).unwrap() - 1.0).abs() < 1e-12);

        let mut seg = segment(&[("std1", "x")], "a b", "c d");
        seg.system_id = "B".into();
        let mut store = EmbeddingStore::new(4, "hand", 0).unwrap();
        store.insert(emb(&["a", "b"], &[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0]])).unwrap();
        store.insert(emb(&["c", "d"], &[&[0.0, 0.0, 1.0, 0.0], &[0.0, 0.0, 0.0, 1.0]])).unwrap();
        let cfg = YiSiConfig::new(0.7, &idf, &store, YiSiMode::SourceBased).unwrap();
        assert_eq!(score_yisi2(&seg, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn comb_reduces_to_single_and_handles_identical_refs() {
        let seg = segment(
            &[("std1", "ein roter hund"), ("std2", "ein roter hund"), ("para", "ein roter hund")],
            "der rote hund",
            "a red dog",
        );
        let store = store_for(&seg);
        let idf = IdfTable::uniform();
        let cfg = YiSiConfig::new(0.7, &idf, &store, YiSiMode::ReferenceBased).unwrap();
        let single = score_yisi1(&seg, "std1", &cfg).unwrap();
        assert_eq!(yisi_comb(&seg, &["std1"], &cfg).unwrap(), single);
        assert_eq!(yisi_comb(&seg, &["std1", "std2", "para"], &cfg).unwrap(), single);
        assert!(matches!(yisi_comb(&seg, &[], &cfg), Err(Error::Argument(_))));
    }

    #[test]
    fn comb_hand_example() {
        // P = (0.6, 0.8), R = (0.5, 0.4): max P = 0.8, min R = 0.4
        let combined = PrecisionRecall::new(0.6f64.max(0.8), 0.5f64.min(0.4));
        let v = f_alpha(combined, 0.7).unwrap();
        assert!((v - 0.470_588_235_294_117_6).abs() < 1e-12);
    }

    #[test]
    fn grid_parsing() {
        let g = alpha_grid(0.0, 1.0, 0.1).unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[3], 0.3);
        assert_eq!(g[7], 0.7);
        assert_eq!(g[10], 1.0);
        assert!(alpha_grid(0.0, 1.0, 0.0).is_err());
    }
}
