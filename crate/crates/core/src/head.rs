//! Affine regression head `y = W.v + b` over fixed-width sentence-pair
//! vectors, fitted to human ratings by mini-batch gradient descent on MSE.
//!
//! Training starts from `W = 0`, `b = mean(train labels)`, draws mini-batches
//! from a seeded stream of shuffled epochs, evaluates held-out MSE every
//! `eval_every` steps (and once before the first step), and returns the
//! parameters of the best evaluation. [`grid_search`] repeats this for each
//! learning rate and keeps the run with the lowest held-out loss.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{split_corpus, RatedSegment, RatingsCorpus};
use crate::embedding::{EmbeddingStore, SentenceEmbedding};
use crate::error::{Error, Result};
use crate::io_util::{read_to_string, write_atomic};

/// Learning rates tried by default.
pub const DEFAULT_LR_GRID: [f64; 6] = [5e-6, 8e-6, 9e-6, 1e-5, 2e-5, 3e-5];
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_EVAL_EVERY: u64 = 1000;
pub const DEFAULT_HOLDOUT_FRACTION: f64 = 0.1;
pub const DEFAULT_MAX_STEPS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairOrigin {
    ExportedPooled,
    Composed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairVector {
    pub values: Vec<f64>,
    pub origin: PairOrigin,
}

impl PairVector {
    pub fn composed(values: Vec<f64>) -> Self {
        PairVector {
            values,
            origin: PairOrigin::Composed,
        }
    }

    pub fn width(&self) -> usize {
        self.values.len()
    }
}

/// The candidate's exported pooled pair vector when it has one; otherwise
/// `[mean_r ; mean_c ; |mean_r - mean_c| ; mean_r * mean_c]` over token means.
pub fn compose_pair_vector(reference: &SentenceEmbedding, candidate: &SentenceEmbedding) -> Result<PairVector> {
    if reference.dim() != candidate.dim() {
        return Err(Error::Argument(format!(
            "reference dim {} differs from candidate dim {}",
            reference.dim(),
            candidate.dim()
        )));
    }
    if let Some(pooled) = candidate.pooled_pair() {
        return Ok(PairVector {
            values: pooled.to_vec(),
            origin: PairOrigin::ExportedPooled,
        });
    }
    if reference.is_empty() || candidate.is_empty() {
        return Err(Error::Argument("cannot compose a pair vector for an empty sentence".into()));
    }
    let mr = reference.mean_vector();
    let mc = candidate.mean_vector();
    let mut values = Vec::with_capacity(4 * mr.len());
    values.extend_from_slice(&mr);
    values.extend_from_slice(&mc);
    values.extend(mr.iter().zip(&mc).map(|(r, c)| (r - c).abs()));
    values.extend(mr.iter().zip(&mc).map(|(r, c)| r * c));
    Ok(PairVector::composed(values))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedHead {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub learning_rate: f64,
    /// Step at which the returned parameters were taken.
    pub steps_trained: u64,
    /// Held-out MSE of the returned parameters (training MSE when there was
    /// no holdout, see `heldout_fallback`).
    pub best_heldout_loss: f64,
    pub eval_every: u64,
    pub batch_size: usize,
    /// Set when the holdout was empty and the final-step parameters were
    /// returned instead of an early-stopping snapshot.
    pub heldout_fallback: bool,
}

impl TrainedHead {
    pub fn width(&self) -> usize {
        self.weights.len()
    }
}

pub fn predict(head: &TrainedHead, v: &PairVector) -> Result<f64> {
    if v.width() != head.width() {
        return Err(Error::Argument(format!(
            "pair vector width {} does not match head width {}",
            v.width(),
            head.width()
        )));
    }
    Ok(affine(&head.weights, head.bias, &v.values))
}

fn affine(w: &[f64], b: f64, v: &[f64]) -> f64 {
    w.iter().zip(v).map(|(a, x)| a * x).sum::<f64>() + b
}

/// A pair vector with its human label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub vector: Vec<f64>,
    pub label: f64,
}

impl Example {
    pub fn new(vector: Vec<f64>, label: f64) -> Self {
        Example { vector, label }
    }
}

/// `(1/N) sum (y - W.v - b)^2`.
pub fn mse_loss<'a, I>(weights: &[f64], bias: f64, examples: I) -> f64
where
    I: IntoIterator<Item = &'a Example>,
{
    let (mut sum, mut n) = (0.0, 0usize);
    for ex in examples {
        let r = ex.label - affine(weights, bias, &ex.vector);
        sum += r * r;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Analytic gradient of [`mse_loss`] with respect to `(W, b)`.
pub fn mse_gradient<'a, I>(weights: &[f64], bias: f64, examples: I) -> (Vec<f64>, f64)
where
    I: IntoIterator<Item = &'a Example>,
{
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    let mut n = 0usize;
    for ex in examples {
        let r = affine(weights, bias, &ex.vector) - ex.label;
        for (g, x) in gw.iter_mut().zip(&ex.vector) {
            *g += r * x;
        }
        gb += r;
        n += 1;
    }
    if n == 0 {
        return (gw, 0.0);
    }
    let scale = 2.0 / n as f64;
    gw.iter_mut().for_each(|g| *g *= scale);
    (gw, gb * scale)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_grid: Vec<f64>,
    pub batch_size: usize,
    pub eval_every: u64,
    pub max_steps: u64,
    pub seed: u64,
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_grid: DEFAULT_LR_GRID.to_vec(),
            batch_size: DEFAULT_BATCH_SIZE,
            eval_every: DEFAULT_EVAL_EVERY,
            max_steps: DEFAULT_MAX_STEPS,
            seed: crate::DEFAULT_SEED,
            holdout_fraction: DEFAULT_HOLDOUT_FRACTION,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr_grid.is_empty() {
            return Err(Error::Argument("learning-rate grid is empty".into()));
        }
        if let Some(lr) = self.lr_grid.iter().find(|&&lr| !(lr > 0.0 && lr.is_finite())) {
            return Err(Error::Argument(format!("learning rate {lr} must be positive")));
        }
        self.validate_run()
    }

    fn validate_run(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Argument("batch size must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Argument("eval_every must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.holdout_fraction) {
            return Err(Error::Argument(format!(
                "holdout fraction {} outside [0, 1]",
                self.holdout_fraction
            )));
        }
        Ok(())
    }
}

/// What one training run did, for inspection and protocol checks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub learning_rate: f64,
    pub steps_run: u64,
    /// Steps at which held-out loss was measured (0 is the initialization).
    pub eval_steps: Vec<u64>,
    pub heldout_losses: Vec<f64>,
    pub batches: u64,
    pub smallest_batch: usize,
    pub largest_batch: usize,
    pub examples_seen: u64,
    pub train_size: usize,
    pub holdout_size: usize,
}

/// Endless stream of indices over seeded, reshuffled epochs.
struct BatchStream {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl BatchStream {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        BatchStream { order, pos: 0, rng }
    }

    fn next_batch(&mut self, size: usize, out: &mut Vec<usize>) {
        out.clear();
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
    }
}

fn check_widths(train: &[Example], holdout: &[Example]) -> Result<usize> {
    let width = train
        .first()
        .map(|e| e.vector.len())
        .ok_or_else(|| Error::Argument("training set is empty".into()))?;
    for ex in train.iter().chain(holdout) {
        if ex.vector.len() != width {
            return Err(Error::Argument(format!(
                "inconsistent pair-vector widths {} and {width}",
                ex.vector.len()
            )));
        }
        if !ex.label.is_finite() || ex.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("non-finite value in training data".into()));
        }
    }
    Ok(width)
}

pub fn train_head(train: &[Example], holdout: &[Example], lr: f64, config: &TrainConfig) -> Result<TrainedHead> {
    train_head_traced(train, holdout, lr, config).map(|(h, _)| h)
}

pub fn train_head_traced(
    train: &[Example],
    holdout: &[Example],
    lr: f64,
    config: &TrainConfig,
) -> Result<(TrainedHead, TrainTrace)> {
    config.validate_run()?;
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Argument(format!("learning rate {lr} must be >= 0")));
    }
    let width = check_widths(train, holdout)?;

    let mut weights = vec![0.0; width];
    let mut bias = train.iter().map(|e| e.label).sum::<f64>() / train.len() as f64;
    let mut trace = TrainTrace {
        learning_rate: lr,
        smallest_batch: usize::MAX,
        train_size: train.len(),
        holdout_size: holdout.len(),
        ..Default::default()
    };

    let mut best: Option<(f64, Vec<f64>, f64, u64)> = None;
    let mut evaluate = |w: &[f64], b: f64, step: u64, trace: &mut TrainTrace| -> Result<()> {
        if holdout.is_empty() {
            return Ok(());
        }
        let loss = mse_loss(w, b, holdout);
        if !loss.is_finite() {
            return Err(Error::Divergence { step, lr });
        }
        trace.eval_steps.push(step);
        trace.heldout_losses.push(loss);
        if best.as_ref().is_none_or(|(l, ..)| loss < *l) {
            best = Some((loss, w.to_vec(), b, step));
        }
        Ok(())
    };
    evaluate(&weights, bias, 0, &mut trace)?;

    let mut stream = BatchStream::new(train.len(), config.seed);
    let mut batch = Vec::with_capacity(config.batch_size);
    for step in 1..=config.max_steps {
        stream.next_batch(config.batch_size, &mut batch);
        let examples = batch.iter().map(|&i| &train[i]);
        let (gw, gb) = mse_gradient(&weights, bias, examples);
        for (w, g) in weights.iter_mut().zip(&gw) {
            *w -= lr * g;
        }
        bias -= lr * gb;
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Divergence { step, lr });
        }
        trace.steps_run = step;
        trace.batches += 1;
        trace.examples_seen += batch.len() as u64;
        trace.smallest_batch = trace.smallest_batch.min(batch.len());
        trace.largest_batch = trace.largest_batch.max(batch.len());
        if step % config.eval_every == 0 {
            evaluate(&weights, bias, step, &mut trace)?;
        }
    }
    if trace.batches == 0 {
        trace.smallest_batch = 0;
    }

    let head = match best {
        Some((loss, w, b, step)) => TrainedHead {
            weights: w,
            bias: b,
            learning_rate: lr,
            steps_trained: step,
            best_heldout_loss: loss,
            eval_every: config.eval_every,
            batch_size: config.batch_size,
            heldout_fallback: false,
        },
        None => {
            log::warn!("empty holdout: returning final-step parameters without early stopping");
            let loss = mse_loss(&weights, bias, train);
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    step: config.max_steps,
                    lr,
                });
            }
            TrainedHead {
                best_heldout_loss: loss,
                weights,
                bias,
                learning_rate: lr,
                steps_trained: trace.steps_run,
                eval_every: config.eval_every,
                batch_size: config.batch_size,
                heldout_fallback: true,
            }
        }
    };
    Ok((head, trace))
}

/// Outcome of one grid point.
#[derive(Debug, Clone)]
pub struct Trial {
    pub learning_rate: f64,
    pub outcome: std::result::Result<(TrainedHead, TrainTrace), String>,
}

pub fn grid_search(train: &[Example], holdout: &[Example], config: &TrainConfig) -> Result<TrainedHead> {
    grid_search_traced(train, holdout, config).map(|(h, _)| h)
}

/// Trains one head per learning rate (in parallel) and keeps the lowest
/// held-out loss, ties going to the smaller rate. Diverged trials are
/// skipped; if all diverge the error lists them.
pub fn grid_search_traced(
    train: &[Example],
    holdout: &[Example],
    config: &TrainConfig,
) -> Result<(TrainedHead, Vec<Trial>)> {
    config.validate()?;
    check_widths(train, holdout)?;
    let results: Vec<(f64, Result<(TrainedHead, TrainTrace)>)> = config
        .lr_grid
        .par_iter()
        .map(|&lr| (lr, train_head_traced(train, holdout, lr, config)))
        .collect();

    let mut trials = Vec::with_capacity(results.len());
    let mut best: Option<TrainedHead> = None;
    for (lr, res) in results {
        match res {
            Ok((head, trace)) => {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        head.best_heldout_loss < b.best_heldout_loss
                            || (head.best_heldout_loss == b.best_heldout_loss
                                && head.learning_rate < b.learning_rate)
                    }
                };
                if better {
                    best = Some(head.clone());
                }
                trials.push(Trial {
                    learning_rate: lr,
                    outcome: Ok((head, trace)),
                });
            }
            Err(e @ Error::Divergence { .. }) => trials.push(Trial {
                learning_rate: lr,
                outcome: Err(e.to_string()),
            }),
            Err(other) => return Err(other),
        }
    }
    match best {
        Some(head) => Ok((head, trials)),
        None => Err(Error::AllDiverged(
            trials
                .iter()
                .filter_map(|t| t.outcome.as_ref().err().cloned())
                .collect(),
        )),
    }
}

/// One example per (rated segment, reference label): the pair vector of
/// `(reference, candidate)` labeled with the segment's human score.
/// `labels = None` uses every reference of each segment.
pub fn corpus_examples(corpus: &RatingsCorpus, store: &EmbeddingStore, labels: Option<&[&str]>) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for seg in corpus {
        let Some(h) = seg.human_score else { continue };
        for v in segment_pair_vectors(seg, store, labels)? {
            out.push(Example::new(v.values, h));
        }
    }
    Ok(out)
}

fn segment_pair_vectors(seg: &RatedSegment, store: &EmbeddingStore, labels: Option<&[&str]>) -> Result<Vec<PairVector>> {
    let cand = store.lookup(&seg.candidate)?;
    let chosen: Vec<&str> = match labels {
        Some(l) => l.to_vec(),
        None => seg.references.labels().collect(),
    };
    chosen
        .into_iter()
        .map(|label| {
            let r = seg.references.get(label).ok_or_else(|| {
                Error::Lookup(format!("segment {} has no reference {label:?}", seg.key()))
            })?;
            compose_pair_vector(store.lookup(r)?, cand)
        })
        .collect()
}

/// Head prediction for the candidate against one labeled reference.
pub fn score_head(head: &TrainedHead, segment: &RatedSegment, ref_label: &str, store: &EmbeddingStore) -> Result<f64> {
    let v = segment_pair_vectors(segment, store, Some(&[ref_label]))?;
    predict(head, &v[0])
}

#[derive(Debug, Clone)]
pub struct HeadFit {
    pub head: TrainedHead,
    pub trials: Vec<Trial>,
    pub train_segments: usize,
    pub holdout_segments: usize,
    pub train_examples: usize,
    pub holdout_examples: usize,
}

/// Splits `corpus` into train/holdout segments with `config.holdout_fraction`
/// and `config.seed`, builds pair-vector examples, and grid-searches.
pub fn fit_head(corpus: &RatingsCorpus, store: &EmbeddingStore, labels: Option<&[&str]>, config: &TrainConfig) -> Result<HeadFit> {
    config.validate()?;
    let (train_c, holdout_c) = split_corpus(corpus, config.holdout_fraction, config.seed)?;
    let train = corpus_examples(&train_c, store, labels)?;
    let holdout = corpus_examples(&holdout_c, store, labels)?;
    let (head, trials) = grid_search_traced(&train, &holdout, config)?;
    Ok(HeadFit {
        head,
        trials,
        train_segments: train_c.len(),
        holdout_segments: holdout_c.len(),
        train_examples: train.len(),
        holdout_examples: holdout.len(),
    })
}

pub const HEAD_MAGIC: &str = "MTHEAD v1";

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

impl TrainedHead {
    /// Text checkpoint; reals carry 17 significant digits so parsing restores
    /// them exactly.
    pub fn to_checkpoint(&self) -> String {
        let mut out = format!("{HEAD_MAGIC}\nwidth {}\nW", self.width());
        for w in &self.weights {
            out.push(' ');
            out.push_str(&real(*w));
        }
        let _ = write!(
            out,
            "\nb {}\nlr {}\nsteps_trained {}\nbest_heldout_loss {}\neval_every {}\nbatch_size {}\nheldout_fallback {}\n",
            real(self.bias),
            real(self.learning_rate),
            self.steps_trained,
            real(self.best_heldout_loss),
            self.eval_every,
            self.batch_size,
            self.heldout_fallback
        );
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, HEAD_MAGIC)) => {}
            _ => return Err(Error::Format(format!("head checkpoint must start with {HEAD_MAGIC:?}"))),
        }
        let mut field = |name: &str| -> Result<(usize, String)> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::Corruption(format!("checkpoint truncated before {name}")))?;
            let rest = line
                .strip_prefix(name)
                .filter(|r| r.is_empty() || r.starts_with(' '))
                .ok_or_else(|| Error::parse(n, format!("expected {name}")))?;
            Ok((n, rest.trim_start().to_owned()))
        };
        fn num<T: std::str::FromStr>((n, s): (usize, String), what: &str) -> Result<T> {
            s.parse().map_err(|_| Error::parse(n, format!("bad {what} {s:?}")))
        }
        let width: usize = num(field("width")?, "width")?;
        let (wn, wline) = field("W")?;
        let weights = wline
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| Error::parse(wn, format!("bad weight {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if weights.len() != width {
            return Err(Error::parse(wn, format!("{} weights for width {width}", weights.len())));
        }
        let head = TrainedHead {
            weights,
            bias: num(field("b")?, "bias")?,
            learning_rate: num(field("lr")?, "lr")?,
            steps_trained: num(field("steps_trained")?, "steps_trained")?,
            best_heldout_loss: num(field("best_heldout_loss")?, "best_heldout_loss")?,
            eval_every: num(field("eval_every")?, "eval_every")?,
            batch_size: num(field("batch_size")?, "batch_size")?,
            heldout_fallback: num(field("heldout_fallback")?, "heldout_fallback")?,
        };
        if head.weights.iter().chain([&head.bias]).any(|v| !v.is_finite()) {
            return Err(Error::Corruption("non-finite head parameter".into()));
        }
        Ok(head)
    }
}

pub fn write_head(head: &TrainedHead, path: &Path) -> Result<()> {
    write_atomic(path, head.to_checkpoint().as_bytes())
}

pub fn read_head(path: &Path) -> Result<TrainedHead> {
    TrainedHead::from_checkpoint(&read_to_string(path)?)
}
