//! Independent reference implementations and fixtures shared by the
//! integration tests. Nothing here calls the scoring code it checks.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use mtmb::corpus::{RatedSegment, RatingsCorpus, ReferenceSet, Sentence};
use mtmb::embedding::SentenceEmbedding;
use rand::Rng;

pub fn sentence(text: &str) -> Sentence {
    Sentence::from_tokens(text.split_whitespace())
}

pub fn random_words<R: Rng>(rng: &mut R, vocab: usize, min: usize, max: usize) -> Vec<String> {
    let n = rng.random_range(min..=max);
    (0..n).map(|_| format!("w{}", rng.random_range(0..vocab))).collect()
}

/// One rated segment with the given references.
pub fn segment(lp: &str, seg: u64, sys: &str, cand: &[String], refs: &[(&str, Vec<String>)], source: &[String], human: Option<f64>) -> RatedSegment {
    let mut references = ReferenceSet::new();
    for (label, toks) in refs {
        references.insert(*label, Sentence::from_tokens(toks)).unwrap();
    }
    RatedSegment {
        lang_pair: lp.into(),
        segment_id: seg,
        system_id: sys.into(),
        source: Sentence::from_tokens(source),
        candidate: Sentence::from_tokens(cand),
        references,
        human_score: human,
    }
}

/// Corpus with one reference per segment and the given human scores,
/// `scores[sys][seg]`.
pub fn rated_corpus(lp: &str, scores: &[Vec<f64>]) -> RatingsCorpus {
    let mut segs = Vec::new();
    for (s, row) in scores.iter().enumerate() {
        for (g, &h) in row.iter().enumerate() {
            let t = vec![format!("t{g}")];
            segs.push(segment(lp, g as u64 + 1, &format!("sys{s}"), &t, &[("std1", t.clone())], &t, Some(h)));
        }
    }
    RatingsCorpus::new(segs).unwrap()
}

/// `ln((N + 1) / (df + 1)) + 1`, counting documents by hand.
pub fn oracle_idf(docs: &[Vec<String>], token: &str) -> f64 {
    let df = docs.iter().filter(|d| d.iter().any(|t| t == token)).count();
    ((docs.len() as f64 + 1.0) / (df as f64 + 1.0)).ln() + 1.0
}

fn oracle_cos(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    ab / (aa.sqrt() * bb.sqrt())
}

/// Weighted greedy matching by explicit double loop.
pub fn oracle_pr(cand: &SentenceEmbedding, refr: &SentenceEmbedding, weight: &dyn Fn(&str) -> f64) -> (f64, f64) {
    let d = cand.dim();
    let cm = cand.matrix();
    let rm = refr.matrix();
    let (mut pn, mut pd) = (0.0, 0.0);
    for i in 0..cand.len() {
        let mut best = f64::NEG_INFINITY;
        for j in 0..refr.len() {
            let c = oracle_cos(&cm[i * d..(i + 1) * d], &rm[j * d..(j + 1) * d]);
            if c > best {
                best = c;
            }
        }
        let w = weight(&cand.tokens()[i]);
        pn += w * best;
        pd += w;
    }
    let (mut rn, mut rd) = (0.0, 0.0);
    for j in 0..refr.len() {
        let mut best = f64::NEG_INFINITY;
        for i in 0..cand.len() {
            let c = oracle_cos(&cm[i * d..(i + 1) * d], &rm[j * d..(j + 1) * d]);
            if c > best {
                best = c;
            }
        }
        let w = weight(&refr.tokens()[j]);
        rn += w * best;
        rd += w;
    }
    (pn / pd, rn / rd)
}

pub fn oracle_f(p: f64, r: f64, alpha: f64) -> f64 {
    p * r / (alpha * p + (1.0 - alpha) * r)
}

/// Tau over all qualifying system pairs, enumerated from raw
/// `(segment, system, human, metric)` rows.
pub fn brute_kendall(rows: &[(u64, String, f64, f64)], threshold: f64) -> Option<f64> {
    let (mut conc, mut disc) = (0i64, 0i64);
    for a in rows {
        for b in rows {
            if a.0 != b.0 || a.1 >= b.1 {
                continue;
            }
            let gap = (a.2 - b.2).abs();
            if gap < threshold || gap == 0.0 {
                continue;
            }
            let (hi, lo) = if a.2 > b.2 { (a, b) } else { (b, a) };
            if hi.3 > lo.3 {
                conc += 1;
            } else {
                disc += 1;
            }
        }
    }
    if conc + disc == 0 {
        None
    } else {
        Some((conc - disc) as f64 / (conc + disc) as f64)
    }
}

/// Textbook sums-of-products Pearson.
pub fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..x.len() {
        num += (x[i] - mx) * (y[i] - my);
        dx += (x[i] - mx).powi(2);
        dy += (y[i] - my).powi(2);
    }
    num / (dx * dy).sqrt()
}

/// Per-system means of `(system, value)` rows by plain summation.
pub fn brute_system_means(rows: &[(String, f64)]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (s, v) in rows {
        let e = acc.entry(s.clone()).or_default();
        e.0 += v;
        e.1 += 1;
    }
    acc.into_iter().map(|(s, (sum, n))| (s, sum / n as f64)).collect()
}

pub fn distinct(items: &[f64]) -> bool {
    let set: HashSet<u64> = items.iter().map(|v| v.to_bits()).collect();
    set.len() == items.len()
}
