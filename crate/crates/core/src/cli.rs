//! The `mtmb` command line.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::corpus::{self, parse_ratings_with, CorpusFormat, RatingsCorpus, Sentence, Tokenizer};
use crate::embedding::{compute_idf, read_store_with_map, write_store, EmbeddingStore, IdfTable};
use crate::ensemble::{all_comb, zscore_columns, PredictionMatrix};
use crate::error::{Error, Result};
use crate::eval::{build_report, DEFAULT_DARR_THRESHOLD};
use crate::head::{fit_head, read_head, score_head, write_head, TrainConfig, TrainedHead, DEFAULT_LR_GRID};
use crate::io_util::{read_lines, read_to_string, write_atomic};
use crate::scores::{scores_from_tsv, scores_to_tsv, ScoreSet};
use crate::yisi::{
    alpha_grid, score_yisi1, score_yisi2, sweep_alpha, yisi1_pr, yisi2_pr, yisi_comb, yisi_comb_pr, Level,
    PrecisionRecall, YiSiConfig, YiSiMode, DEFAULT_ALPHA,
};
use crate::DEFAULT_SEED;

#[derive(Parser, Debug)]
#[command(name = "mtmb", version, about = "Embedding-based MT evaluation toolkit")]
pub struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, env = "MTMB_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate a ratings corpus and write it back normalized.
    Ingest(IngestArgs),
    /// Build a deterministic toy embedding store.
    EmbedToy(EmbedToyArgs),
    /// Compute IDF weights over reference sentences.
    Idf(IdfArgs),
    /// Score a corpus with one metric.
    Score(ScoreArgs),
    /// Fit the regression head with a learning-rate grid search.
    TrainHead(TrainHeadArgs),
    /// Combine score files into one prediction per segment.
    Combine(CombineArgs),
    /// Correlation of F-alpha with human ratings across an alpha grid.
    SweepAlpha(SweepArgs),
    /// Correlate metric scores with human ratings.
    Evaluate(EvaluateArgs),
    /// Run the whole pipeline on a synthetic corpus.
    Demo(DemoArgs),
}

#[derive(Args, Debug)]
pub struct CorpusArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Defaults to the file extension (.jsonl is JSONL, anything else TSV).
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, value_enum, default_value_t = TokenizerArg::Whitespace)]
    pub tokenizer: TokenizerArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FormatArg {
    Tsv,
    Jsonl,
}

impl From<FormatArg> for CorpusFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Tsv => CorpusFormat::Tsv,
            FormatArg::Jsonl => CorpusFormat::Jsonl,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TokenizerArg {
    Whitespace,
    Pretokenized,
}

impl From<TokenizerArg> for Tokenizer {
    fn from(t: TokenizerArg) -> Self {
        match t {
            TokenizerArg::Whitespace => Tokenizer::Whitespace,
            TokenizerArg::Pretokenized => Tokenizer::Pretokenized,
        }
    }
}

impl CorpusArgs {
    fn load(&self) -> Result<RatingsCorpus> {
        let format = self.format.map(Into::into).unwrap_or_else(|| CorpusFormat::from_path(&self.corpus));
        parse_ratings_with(&self.corpus, format, self.tokenizer.into())
    }
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    /// Normalized corpus; format follows the extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write every distinct sentence, one per line.
    #[arg(long)]
    pub sentences: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EmbedToyArgs {
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Sentences, one per line.
    #[arg(long = "in", required_unless_present = "corpus")]
    pub input: Option<PathBuf>,
    /// Embed every sentence of a ratings corpus instead.
    #[arg(long, conflicts_with = "input")]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TokenizerArg::Whitespace)]
    pub tokenizer: TokenizerArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct IdfArgs {
    /// Corpora whose references are the documents.
    #[arg(long, value_delimiter = ',', required = true)]
    pub refs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = TokenizerArg::Whitespace)]
    pub tokenizer: TokenizerArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MetricKind {
    Yisi1,
    Yisi2,
    YisiComb,
    Head,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    #[arg(long, value_enum)]
    pub metric: MetricKind,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Embedding store; a `<store>.map` sidecar next to it is used when present.
    #[arg(long)]
    pub store: PathBuf,
    /// Without it, weights come from the corpus references.
    #[arg(long)]
    pub idf: Option<PathBuf>,
    /// Reference labels; defaults to those every segment has.
    #[arg(long, value_delimiter = ',')]
    pub refs: Vec<String>,
    #[arg(long, required_if_eq("metric", "head"))]
    pub head: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainHeadArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    /// Embedding store; a `<store>.map` sidecar next to it is used when present.
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LR_GRID.to_vec())]
    pub grid: Vec<f64>,
    #[arg(long, default_value_t = crate::head::DEFAULT_BATCH_SIZE)]
    pub batch: usize,
    #[arg(long, default_value_t = crate::head::DEFAULT_EVAL_EVERY)]
    pub eval_every: u64,
    #[arg(long, default_value_t = crate::head::DEFAULT_MAX_STEPS)]
    pub max_steps: u64,
    #[arg(long, default_value_t = crate::head::DEFAULT_HOLDOUT_FRACTION)]
    pub holdout: f64,
    #[arg(long, value_delimiter = ',')]
    pub refs: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CombineMode {
    AllComb,
}

#[derive(Args, Debug)]
pub struct CombineArgs {
    #[arg(long, value_enum, default_value_t = CombineMode::AllComb)]
    pub mode: CombineMode,
    #[arg(long, value_delimiter = ',', required = true)]
    pub inputs: Vec<PathBuf>,
    /// Standardize each column before averaging.
    #[arg(long)]
    pub zscore: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    /// Embedding store; a `<store>.map` sidecar next to it is used when present.
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub idf: Option<PathBuf>,
    /// One label sweeps YiSi-1, several sweep YiSi-comb.
    #[arg(long, value_delimiter = ',')]
    pub refs: Vec<String>,
    /// Sweep YiSi-2 against the source instead.
    #[arg(long, conflicts_with = "refs")]
    pub source: bool,
    /// start:end:step
    #[arg(long, default_value = "0:1:0.1")]
    pub grid: String,
    #[arg(long, value_enum, default_value_t = LevelArg::System)]
    pub level: LevelArg,
    #[arg(long, default_value_t = DEFAULT_DARR_THRESHOLD)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LevelArg {
    Segment,
    System,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pub scores: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_DARR_THRESHOLD)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DemoArgs {
    #[arg(long, default_value = "mtmb-demo")]
    pub out_dir: PathBuf,
}

/// Parses `argv` and runs the command. Returns 0 on success, 1 on a domain
/// error (reported as `error[category]: message`), 2 on a usage error.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            1
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::EmbedToy(a) => embed_toy(a, cli.seed),
        Command::Idf(a) => idf(a),
        Command::Score(a) => score(a),
        Command::TrainHead(a) => train_head(a, cli.seed),
        Command::Combine(a) => combine(a),
        Command::SweepAlpha(a) => sweep(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Demo(a) => {
            let report = crate::demo::demo_pipeline(&a.out_dir, cli.seed)?;
            print!("{}", report.to_table());
            println!("outputs in {}", a.out_dir.display());
            Ok(())
        }
    }
}

fn check_inputs<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        if !p.is_file() {
            return Err(Error::Argument(format!("input {} does not exist or is not a file", p.display())));
        }
    }
    Ok(())
}

fn check_outputs<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        let parent = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        if !parent.is_dir() {
            return Err(Error::Argument(format!(
                "output directory {} does not exist",
                parent.display()
            )));
        }
        if p.is_dir() {
            return Err(Error::Argument(format!("output {} is a directory", p.display())));
        }
    }
    Ok(())
}

fn ingest(a: &IngestArgs) -> Result<()> {
    check_inputs([a.input.corpus.as_path()])?;
    check_outputs(a.out.iter().chain(&a.sentences).map(PathBuf::as_path))?;
    let corpus = a.input.load()?;
    if let Some(out) = &a.out {
        write_atomic(out, corpus::to_string(&corpus, CorpusFormat::from_path(out)).as_bytes())?;
    }
    if let Some(path) = &a.sentences {
        write_atomic(path, sentence_lines(&corpus).as_bytes())?;
    }
    let rated = corpus.iter().filter(|s| s.human_score.is_some()).count();
    println!(
        "{} segments ({rated} rated) across {} language pair(s)",
        corpus.len(),
        corpus.lang_pairs().len()
    );
    Ok(())
}

/// Distinct sentences of a corpus in first-seen order, tokens joined by
/// spaces.
pub fn sentence_lines(corpus: &RatingsCorpus) -> String {
    let mut seen = BTreeSet::new();
    let mut out = String::new();
    for s in corpus.all_sentences() {
        let text = s.text();
        if seen.insert(text.clone()) {
            out.push_str(&text);
            out.push('\n');
        }
    }
    out
}

fn embed_toy(a: &EmbedToyArgs, seed: u64) -> Result<()> {
    check_inputs(a.input.iter().chain(&a.corpus).map(PathBuf::as_path))?;
    check_outputs([a.out.as_path()])?;
    let tokenizer: Tokenizer = a.tokenizer.into();
    let sentences: Vec<Sentence> = match (&a.input, &a.corpus) {
        (Some(path), _) => read_lines(path)?.iter().map(|l| tokenizer.tokenize(l)).collect(),
        (None, Some(path)) => parse_ratings_with(path, CorpusFormat::from_path(path), tokenizer)?.all_sentences(),
        (None, None) => unreachable!("clap requires one input"),
    };
    let store = EmbeddingStore::toy(&sentences, a.dim, seed)?;
    write_store(&store, &a.out)?;
    println!("{} sentences embedded at dim {} (seed {seed})", store.len(), a.dim);
    Ok(())
}

fn idf(a: &IdfArgs) -> Result<()> {
    check_inputs(a.refs.iter().map(PathBuf::as_path))?;
    check_outputs([a.out.as_path()])?;
    let mut docs = Vec::new();
    for path in &a.refs {
        let corpus = parse_ratings_with(path, CorpusFormat::from_path(path), a.tokenizer.into())?;
        docs.extend(corpus.unique_references());
    }
    let table = compute_idf(&docs)?;
    write_atomic(&a.out, table.to_tsv().as_bytes())?;
    println!("{} tokens over {} documents", table.len(), table.doc_count());
    Ok(())
}

/// Labels every segment of `corpus` has, in label order.
pub fn common_labels(corpus: &RatingsCorpus) -> Vec<String> {
    let mut iter = corpus.iter();
    let Some(first) = iter.next() else {
        return Vec::new();
    };
    let mut common: BTreeSet<&str> = first.references.labels().collect();
    for seg in iter {
        let here: BTreeSet<&str> = seg.references.labels().collect();
        common.retain(|l| here.contains(l));
    }
    common.into_iter().map(str::to_owned).collect()
}

fn resolve_labels(requested: &[String], corpus: &RatingsCorpus) -> Result<Vec<String>> {
    let labels = if requested.is_empty() {
        common_labels(corpus)
    } else {
        requested.to_vec()
    };
    if labels.is_empty() {
        return Err(Error::Argument("no reference label shared by every segment".into()));
    }
    Ok(labels)
}

fn load_idf(path: Option<&Path>, corpus: &RatingsCorpus) -> Result<IdfTable> {
    match path {
        Some(p) => IdfTable::from_tsv(&read_to_string(p)?),
        None => compute_idf(&corpus.unique_references()),
    }
}

fn map_segments<F>(corpus: &RatingsCorpus, metric: String, f: F) -> Result<ScoreSet>
where
    F: Fn(&corpus::RatedSegment) -> Result<f64> + Sync,
{
    let scored = corpus
        .segments()
        .par_iter()
        .map(|seg| Ok((seg.key(), f(seg)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut set: ScoreSet = scored.into_iter().collect();
    set.metric = metric;
    Ok(set)
}

/// Scores every segment of `corpus`. YiSi-1 and the head give one column per
/// label (`yisi1@std1`, `head@para`, ...); YiSi-2 gives `yisi2@src`; YiSi-comb
/// a single `yisi-comb` column over all labels.
pub fn score_corpus(
    corpus: &RatingsCorpus,
    kind: MetricKind,
    labels: &[String],
    alpha: f64,
    store: &EmbeddingStore,
    idf: &IdfTable,
    head: Option<&TrainedHead>,
) -> Result<Vec<ScoreSet>> {
    match kind {
        MetricKind::Yisi1 => {
            let cfg = YiSiConfig::new(alpha, idf, store, YiSiMode::ReferenceBased)?;
            labels
                .iter()
                .map(|l| map_segments(corpus, format!("yisi1@{l}"), |s| score_yisi1(s, l, &cfg)))
                .collect()
        }
        MetricKind::Yisi2 => {
            let cfg = YiSiConfig::new(alpha, idf, store, YiSiMode::SourceBased)?;
            Ok(vec![map_segments(corpus, "yisi2@src".into(), |s| score_yisi2(s, &cfg))?])
        }
        MetricKind::YisiComb => {
            let cfg = YiSiConfig::new(alpha, idf, store, YiSiMode::ReferenceBased)?;
            let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
            Ok(vec![map_segments(corpus, "yisi-comb".into(), |s| yisi_comb(s, &refs, &cfg))?])
        }
        MetricKind::Head => {
            let head = head.ok_or_else(|| Error::Argument("head metric needs a trained head".into()))?;
            labels
                .iter()
                .map(|l| map_segments(corpus, format!("head@{l}"), |s| score_head(head, s, l, store)))
                .collect()
        }
    }
}

fn score(a: &ScoreArgs) -> Result<()> {
    let inputs = [Some(&a.input.corpus), Some(&a.store), a.idf.as_ref(), a.head.as_ref()];
    check_inputs(inputs.into_iter().flatten().map(PathBuf::as_path))?;
    check_outputs([a.out.as_path()])?;
    if !(0.0..=1.0).contains(&a.alpha) {
        return Err(Error::Argument(format!("alpha {} outside [0, 1]", a.alpha)));
    }
    let corpus = a.input.load()?;
    let store = read_store_with_map(&a.store)?;
    let idf = load_idf(a.idf.as_deref(), &corpus)?;
    let head = a.head.as_deref().map(read_head).transpose()?;
    let labels = match a.metric {
        MetricKind::Yisi2 => Vec::new(),
        _ => resolve_labels(&a.refs, &corpus)?,
    };
    let sets = score_corpus(&corpus, a.metric, &labels, a.alpha, &store, &idf, head.as_ref())?;
    write_atomic(&a.out, scores_to_tsv(&sets).as_bytes())?;
    let names: Vec<&str> = sets.iter().map(|s| s.metric.as_str()).collect();
    println!("{} segments scored: {}", corpus.len(), names.join(", "));
    Ok(())
}

fn train_head(a: &TrainHeadArgs, seed: u64) -> Result<()> {
    check_inputs([a.input.corpus.as_path(), a.store.as_path()])?;
    check_outputs([a.out.as_path()])?;
    let config = TrainConfig {
        lr_grid: a.grid.clone(),
        batch_size: a.batch,
        eval_every: a.eval_every,
        max_steps: a.max_steps,
        seed,
        holdout_fraction: a.holdout,
    };
    config.validate()?;
    let corpus = a.input.load()?;
    let store = read_store_with_map(&a.store)?;
    let labels = resolve_labels(&a.refs, &corpus)?;
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    let fit = fit_head(&corpus, &store, Some(&refs), &config)?;
    for t in &fit.trials {
        match &t.outcome {
            Ok((h, _)) => println!("lr {:e}\theld-out mse {:.6}\tstep {}", t.learning_rate, h.best_heldout_loss, h.steps_trained),
            Err(reason) => println!("lr {:e}\t{reason}", t.learning_rate),
        }
    }
    write_head(&fit.head, &a.out)?;
    println!(
        "selected lr {:e} ({} train / {} held-out examples)",
        fit.head.learning_rate, fit.train_examples, fit.holdout_examples
    );
    Ok(())
}

fn read_score_files(paths: &[PathBuf]) -> Result<Vec<ScoreSet>> {
    let mut sets = Vec::new();
    for p in paths {
        sets.extend(scores_from_tsv(&read_to_string(p)?)?);
    }
    Ok(sets)
}

fn combine(a: &CombineArgs) -> Result<()> {
    check_inputs(a.inputs.iter().map(PathBuf::as_path))?;
    check_outputs([a.out.as_path()])?;
    let CombineMode::AllComb = a.mode;
    let mut matrix = PredictionMatrix::from_score_sets(&read_score_files(&a.inputs)?)?;
    if a.zscore {
        matrix = zscore_columns(&matrix)?;
    }
    let combined = all_comb(&matrix)?;
    write_atomic(&a.out, scores_to_tsv(std::slice::from_ref(&combined)).as_bytes())?;
    println!(
        "{} segments combined over {} columns: {}",
        combined.len(),
        matrix.columns().len(),
        matrix.columns().join(", ")
    );
    Ok(())
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let nums = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Argument(format!("grid {text:?} is not start:end:step")))?;
    match nums[..] {
        [start, end, step] => alpha_grid(start, end, step),
        _ => Err(Error::Argument(format!("grid {text:?} is not start:end:step"))),
    }
}

fn sweep(a: &SweepArgs) -> Result<()> {
    check_inputs([Some(&a.input.corpus), Some(&a.store), a.idf.as_ref()].into_iter().flatten().map(PathBuf::as_path))?;
    check_outputs([a.out.as_path()])?;
    let grid = parse_grid(&a.grid)?;
    let corpus = a.input.load()?;
    let store = read_store_with_map(&a.store)?;
    let idf = load_idf(a.idf.as_deref(), &corpus)?;
    let mode = if a.source { YiSiMode::SourceBased } else { YiSiMode::ReferenceBased };
    let cfg = YiSiConfig::new(DEFAULT_ALPHA, &idf, &store, mode)?;
    let labels = if a.source { Vec::new() } else { resolve_labels(&a.refs, &corpus)? };
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    let cached = corpus
        .segments()
        .par_iter()
        .map(|s| {
            let pr: PrecisionRecall = match refs[..] {
                [] => yisi2_pr(s, &cfg)?,
                [one] => yisi1_pr(s, one, &cfg)?,
                _ => yisi_comb_pr(s, &refs, &cfg)?,
            };
            Ok((s.key(), pr))
        })
        .collect::<Result<_>>()?;
    let level = match a.level {
        LevelArg::Segment => Level::Segment,
        LevelArg::System => Level::System,
    };
    let result = sweep_alpha(&cached, &corpus, &grid, level, a.threshold)?;
    write_atomic(&a.out, result.to_csv().as_bytes())?;
    println!("best alpha {} (correlation {:.6})", result.best_alpha, result.best_correlation);
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    check_inputs(std::iter::once(&a.input.corpus).chain(&a.scores).map(PathBuf::as_path))?;
    check_outputs(std::iter::once(&a.out).chain(&a.table).map(PathBuf::as_path))?;
    let corpus = a.input.load()?;
    let sets = read_score_files(&a.scores)?;
    let report = build_report(&corpus, &sets, a.threshold)?;
    write_atomic(&a.out, report.to_csv().as_bytes())?;
    let table = report.to_table();
    if let Some(t) = &a.table {
        write_atomic(t, table.as_bytes())?;
    }
    print!("{table}");
    Ok(())
}
