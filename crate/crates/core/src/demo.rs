//! Synthetic end-to-end run: corpus, toy store, IDF, YiSi scores, head,
//! all-comb, and a correlation report with a planted perfect metric.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cli::{score_corpus, MetricKind};
use crate::corpus::{self, CorpusFormat, RatedSegment, RatingsCorpus, ReferenceSet, Sentence};
use crate::embedding::{compute_idf, write_store, EmbeddingStore};
use crate::ensemble::{all_comb, PredictionMatrix};
use crate::error::{Error, Result};
use crate::eval::{build_report, CorrelationReport, DEFAULT_DARR_THRESHOLD};
use crate::head::{fit_head, write_head, TrainConfig};
use crate::io_util::write_atomic;
use crate::scores::{scores_to_tsv, ScoreSet};
use crate::yisi::DEFAULT_ALPHA;

pub const DEMO_LANG_PAIR: &str = "de-en";
pub const DEMO_SEGMENTS: u64 = 40;
pub const DEMO_DIM: usize = 32;
pub const DEMO_LABELS: [&str; 2] = ["std1", "para"];
/// Planted metric equal to the human scores.
pub const ORACLE_METRIC: &str = "oracle";

/// System id and the share of reference tokens it garbles.
const SYSTEMS: [(&str, f64); 3] = [("sysA", 0.1), ("sysB", 0.4), ("sysC", 0.7)];
const VOCAB: usize = 240;

fn word(i: usize) -> String {
    const SYLLABLES: [&str; 16] = [
        "ka", "lo", "mi", "ten", "ru", "sa", "bel", "no", "fi", "dar", "ve", "qu", "zo", "pi", "han", "te",
    ];
    format!("{}{}", SYLLABLES[i % 16], SYLLABLES[(i / 16) % 16])
}

/// Three systems on 40 segments of one language pair, two references each.
/// Candidates are `std1` with a system-specific share of tokens swapped for
/// random words; the human score falls with the share actually swapped, plus
/// a little noise. `para` rewrites a third of `std1`; the source is `std1`
/// reversed.
pub fn demo_corpus(seed: u64) -> Result<RatingsCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 3.0).expect("valid normal");
    let mut segments = Vec::new();
    for seg in 1..=DEMO_SEGMENTS {
        let len = rng.random_range(6..=12);
        let std1: Vec<String> = (0..len).map(|_| word(rng.random_range(0..VOCAB))).collect();
        let para: Vec<String> = std1
            .iter()
            .map(|t| if rng.random_bool(1.0 / 3.0) { word(rng.random_range(0..VOCAB)) } else { t.clone() })
            .collect();
        let source: Vec<String> = std1.iter().rev().cloned().collect();
        let mut refs = ReferenceSet::new();
        refs.insert("std1", Sentence::from_tokens(&std1))?;
        refs.insert("para", Sentence::from_tokens(&para))?;
        for (system, rate) in SYSTEMS {
            let mut swapped = 0;
            let cand: Vec<String> = std1
                .iter()
                .map(|t| {
                    if rng.random_bool(rate) {
                        swapped += 1;
                        word(rng.random_range(0..VOCAB))
                    } else {
                        t.clone()
                    }
                })
                .collect();
            let clean = 1.0 - swapped as f64 / len as f64;
            let human = (100.0 * clean + noise.sample(&mut rng)).clamp(0.0, 100.0);
            segments.push(RatedSegment {
                lang_pair: DEMO_LANG_PAIR.into(),
                segment_id: seg,
                system_id: system.into(),
                source: Sentence::from_tokens(&source),
                candidate: Sentence::from_tokens(&cand),
                references: refs.clone(),
                human_score: Some((human * 10.0).round() / 10.0),
            });
        }
    }
    RatingsCorpus::new(segments)
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

/// Head settings for the demo: rates suited to a linear head on toy vectors.
pub fn demo_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        lr_grid: vec![1e-2, 3e-2, 1e-1],
        batch_size: 32,
        eval_every: 100,
        max_steps: 2000,
        seed,
        holdout_fraction: 0.1,
    }
}

/// Runs every stage into `out_dir` and checks the planted metric correlates
/// perfectly. Failures carry the stage name.
pub fn demo_pipeline(out_dir: &Path, seed: u64) -> Result<CorrelationReport> {
    stage("setup", std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e)))?;
    let corpus = stage("corpus", demo_corpus(seed))?;
    stage(
        "corpus",
        write_atomic(&out_dir.join("corpus.tsv"), corpus::to_string(&corpus, CorpusFormat::Tsv).as_bytes()),
    )?;

    let store = stage("embed", EmbeddingStore::toy(&corpus.all_sentences(), DEMO_DIM, seed))?;
    stage("embed", write_store(&store, &out_dir.join("store.mtes")))?;

    let idf = stage("idf", compute_idf(&corpus.unique_references()))?;
    stage("idf", write_atomic(&out_dir.join("idf.tsv"), idf.to_tsv().as_bytes()))?;

    let labels: Vec<String> = DEMO_LABELS.iter().map(|s| s.to_string()).collect();
    let mut sets = Vec::new();
    for kind in [MetricKind::Yisi1, MetricKind::Yisi2, MetricKind::YisiComb] {
        sets.extend(stage("score", score_corpus(&corpus, kind, &labels, DEFAULT_ALPHA, &store, &idf, None))?);
    }

    let refs: Vec<&str> = DEMO_LABELS.to_vec();
    let fit = stage("train-head", fit_head(&corpus, &store, Some(&refs), &demo_train_config(seed)))?;
    stage("train-head", write_head(&fit.head, &out_dir.join("head.mthead")))?;
    sets.extend(stage(
        "score",
        score_corpus(&corpus, MetricKind::Head, &labels, DEFAULT_ALPHA, &store, &idf, Some(&fit.head)),
    )?);
    stage("score", write_atomic(&out_dir.join("scores.tsv"), scores_to_tsv(&sets).as_bytes()))?;

    let members: Vec<ScoreSet> = sets.iter().filter(|s| s.metric.contains('@')).cloned().collect();
    let combined = stage("combine", PredictionMatrix::from_score_sets(&members).and_then(|m| all_comb(&m)))?;
    stage(
        "combine",
        write_atomic(&out_dir.join("combined.tsv"), scores_to_tsv(std::slice::from_ref(&combined)).as_bytes()),
    )?;
    sets.push(combined);
    sets.push(ScoreSet::from_human(&corpus, ORACLE_METRIC));

    let report = stage("evaluate", build_report(&corpus, &sets, DEFAULT_DARR_THRESHOLD))?;
    stage("evaluate", write_atomic(&out_dir.join("report.csv"), report.to_csv().as_bytes()))?;
    stage("evaluate", write_atomic(&out_dir.join("report.txt"), report.to_table().as_bytes()))?;

    stage("sanity", sanity_check(&report))?;
    Ok(report)
}

fn sanity_check(report: &CorrelationReport) -> Result<()> {
    let oracle = report
        .row(DEMO_LANG_PAIR, ORACLE_METRIC)
        .ok_or_else(|| Error::Consistency("report has no oracle row".into()))?;
    if oracle.seg_darr != Ok(1.0) || oracle.sys_pearson != Ok(1.0) {
        return Err(Error::Consistency(format!(
            "planted metric should correlate perfectly, got {:?} / {:?}",
            oracle.seg_darr, oracle.sys_pearson
        )));
    }
    if oracle.system_count != SYSTEMS.len() || oracle.pair_count == 0 {
        return Err(Error::Consistency(format!(
            "expected {} systems and some DARR pairs, got {} / {}",
            SYSTEMS.len(),
            oracle.system_count,
            oracle.pair_count
        )));
    }
    for family in ["yisi1", "yisi2", "yisi-comb", "head", "all-comb"] {
        if !report.metrics().iter().any(|m| m.split('@').next() == Some(family)) {
            return Err(Error::Consistency(format!("report lacks a {family} row")));
        }
    }
    Ok(())
}
