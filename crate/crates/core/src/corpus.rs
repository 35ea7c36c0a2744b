//! Ratings corpora: data model, TSV/JSONL ingestion, merging and the seeded
//! holdout split.
//!
//! A corpus is a list of [`RatedSegment`]s, each keyed by
//! `(lang_pair, segment_id, system_id)`. Keys are unique; a repeated key is a
//! hard error, never last-wins. Corpora are immutable once built.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub const TSV_HEADER: &str =
    "lang_pair\tsegment_id\tsystem_id\tsource\tcandidate\tref_label\treference\thuman_score";
const TSV_FIELDS: usize = 8;

/// Tokenizers selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Tokenizer {
    /// NFC-normalize, lowercase, split on unicode whitespace.
    #[default]
    Whitespace,
    /// Split on whitespace only. For text that already holds encoder subwords.
    Pretokenized,
}

impl Tokenizer {
    pub fn tokenize(&self, text: &str) -> Sentence {
        let tokens = match self {
            Tokenizer::Whitespace => {
                let normalized: String = text.nfc().collect::<String>().to_lowercase();
                normalized.split_whitespace().map(str::to_owned).collect()
            }
            Tokenizer::Pretokenized => text.split_whitespace().map(str::to_owned).collect(),
        };
        Sentence { tokens }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Tokenizer::Whitespace => "whitespace",
            Tokenizer::Pretokenized => "pretokenized",
        }
    }
}

impl FromStr for Tokenizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "whitespace" => Ok(Tokenizer::Whitespace),
            "pretokenized" => Ok(Tokenizer::Pretokenized),
            other => Err(Error::Argument(format!("unknown tokenizer {other:?}"))),
        }
    }
}

/// A tokenized sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Sentence {
    tokens: Vec<String>,
}

impl Sentence {
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Sentence {
            tokens: tokens.into_iter().map(Into::into).collect(),
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens joined by single spaces; re-tokenizes to the same sentence.
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

/// Labeled references for one segment ("std1", "std2", "para", ...).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReferenceSet {
    entries: BTreeMap<String, Sentence>,
}

impl ReferenceSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, label: impl Into<String>, sentence: Sentence) -> Result<()> {
        let label = label.into();
        if label.is_empty() {
            return Err(Error::Argument("empty reference label".into()));
        }
        if self.entries.contains_key(&label) {
            return Err(Error::DuplicateKey(format!("reference label {label}")));
        }
        self.entries.insert(label, sentence);
        Ok(())
    }

    pub fn get(&self, label: &str) -> Option<&Sentence> {
        self.entries.get(label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Sentence)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<L: Into<String>> FromIterator<(L, Sentence)> for ReferenceSet {
    /// Later duplicates overwrite earlier ones; use [`ReferenceSet::insert`] to
    /// reject them.
    fn from_iter<T: IntoIterator<Item = (L, Sentence)>>(iter: T) -> Self {
        ReferenceSet {
            entries: iter.into_iter().map(|(l, s)| (l.into(), s)).collect(),
        }
    }
}

/// `(lang_pair, segment_id, system_id)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SegmentKey {
    pub lang_pair: String,
    pub segment_id: u64,
    pub system_id: String,
}

impl SegmentKey {
    pub fn new(lang_pair: impl Into<String>, segment_id: u64, system_id: impl Into<String>) -> Self {
        SegmentKey {
            lang_pair: lang_pair.into(),
            segment_id,
            system_id: system_id.into(),
        }
    }
}

impl fmt::Display for SegmentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.lang_pair, self.segment_id, self.system_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatedSegment {
    pub lang_pair: String,
    pub segment_id: u64,
    pub system_id: String,
    pub source: Sentence,
    pub candidate: Sentence,
    pub references: ReferenceSet,
    /// Direct-assessment score on 0..=100; absent for unlabeled data.
    pub human_score: Option<f64>,
}

impl RatedSegment {
    pub fn key(&self) -> SegmentKey {
        SegmentKey::new(self.lang_pair.clone(), self.segment_id, self.system_id.clone())
    }

    fn validate(&self) -> Result<()> {
        if self.lang_pair.is_empty() || self.system_id.is_empty() {
            return Err(Error::Argument(format!(
                "segment {} has an empty lang_pair or system_id",
                self.key()
            )));
        }
        if self.references.is_empty() {
            return Err(Error::Argument(format!("segment {} has no references", self.key())));
        }
        if let Some(h) = self.human_score {
            if !(0.0..=100.0).contains(&h) {
                return Err(Error::Range { line: 0, value: h });
            }
        }
        Ok(())
    }
}

/// An immutable, key-unique list of rated segments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RatingsCorpus {
    segments: Vec<RatedSegment>,
}

impl RatingsCorpus {
    pub fn new(segments: Vec<RatedSegment>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(segments.len());
        for seg in &segments {
            seg.validate()?;
            if !seen.insert(seg.key()) {
                return Err(Error::DuplicateKey(seg.key().to_string()));
            }
        }
        Ok(RatingsCorpus { segments })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn segments(&self) -> &[RatedSegment] {
        &self.segments
    }

    pub fn iter(&self) -> std::slice::Iter<'_, RatedSegment> {
        self.segments.iter()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = SegmentKey> + '_ {
        self.segments.iter().map(RatedSegment::key)
    }

    /// Distinct language pairs in sorted order.
    pub fn lang_pairs(&self) -> Vec<String> {
        let set: std::collections::BTreeSet<&str> =
            self.segments.iter().map(|s| s.lang_pair.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Segments of one language pair, as a new corpus.
    pub fn filter_lang_pair(&self, lang_pair: &str) -> RatingsCorpus {
        RatingsCorpus {
            segments: self
                .segments
                .iter()
                .filter(|s| s.lang_pair == lang_pair)
                .cloned()
                .collect(),
        }
    }

    /// Human scores keyed by segment; segments without a score are skipped.
    pub fn human_scores(&self) -> BTreeMap<SegmentKey, f64> {
        self.segments
            .iter()
            .filter_map(|s| s.human_score.map(|h| (s.key(), h)))
            .collect()
    }

    /// One sentence per distinct `(lang_pair, segment_id, label)` reference.
    /// References repeat across systems; each is counted once.
    pub fn unique_references(&self) -> Vec<Sentence> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for seg in &self.segments {
            for (label, sentence) in seg.references.iter() {
                if seen.insert((seg.lang_pair.as_str(), seg.segment_id, label)) {
                    out.push(sentence.clone());
                }
            }
        }
        out
    }

    /// Every sentence appearing anywhere in the corpus, deduplicated, in
    /// first-seen order.
    pub fn all_sentences(&self) -> Vec<Sentence> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for seg in &self.segments {
            let refs = seg.references.iter().map(|(_, s)| s);
            for s in [&seg.source, &seg.candidate].into_iter().chain(refs) {
                if seen.insert(s) {
                    out.push(s.clone());
                }
            }
        }
        out
    }
}

impl<'a> IntoIterator for &'a RatingsCorpus {
    type Item = &'a RatedSegment;
    type IntoIter = std::slice::Iter<'a, RatedSegment>;

    fn into_iter(self) -> Self::IntoIter {
        self.segments.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Tsv,
    Jsonl,
}

impl CorpusFormat {
    /// `.jsonl`/`.json` map to JSONL, anything else to TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => CorpusFormat::Jsonl,
            _ => CorpusFormat::Tsv,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(CorpusFormat::Tsv),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(Error::Argument(format!("unknown corpus format {other:?}"))),
        }
    }
}

pub fn parse_ratings(path: &Path, format: CorpusFormat) -> Result<RatingsCorpus> {
    parse_ratings_with(path, format, Tokenizer::default())
}

pub fn parse_ratings_with(
    path: &Path,
    format: CorpusFormat,
    tokenizer: Tokenizer,
) -> Result<RatingsCorpus> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ratings(file, format, tokenizer).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_ratings<R: Read>(
    reader: R,
    format: CorpusFormat,
    tokenizer: Tokenizer,
) -> Result<RatingsCorpus> {
    let reader = BufReader::new(reader);
    match format {
        CorpusFormat::Tsv => read_tsv(reader, tokenizer),
        CorpusFormat::Jsonl => read_jsonl(reader, tokenizer),
    }
}

fn parse_human_score(field: &str, line: usize) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    let value: f64 = field
        .parse()
        .map_err(|_| Error::parse(line, format!("human_score {field:?} is not a number")))?;
    if !(0.0..=100.0).contains(&value) {
        return Err(Error::Range { line, value });
    }
    Ok(Some(value))
}

fn read_tsv<R: BufRead>(reader: R, tokenizer: Tokenizer) -> Result<RatingsCorpus> {
    let mut segments: Vec<RatedSegment> = Vec::new();
    let mut finished: HashSet<SegmentKey> = HashSet::new();
    let mut header_seen = false;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io("<ratings>", e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != TSV_HEADER {
                return Err(Error::parse(lineno, "missing or malformed header line"));
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != TSV_FIELDS {
            return Err(Error::parse(
                lineno,
                format!("expected {TSV_FIELDS} tab-separated fields, found {}", fields.len()),
            ));
        }
        let segment_id: u64 = fields[1]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("segment_id {:?} is not an integer", fields[1])))?;
        let key = SegmentKey::new(fields[0], segment_id, fields[2]);
        if key.lang_pair.is_empty() || key.system_id.is_empty() {
            return Err(Error::parse(lineno, "empty lang_pair or system_id"));
        }
        let source = tokenizer.tokenize(fields[3]);
        let candidate = tokenizer.tokenize(fields[4]);
        let label = fields[5];
        if label.is_empty() {
            return Err(Error::parse(lineno, "empty ref_label"));
        }
        let reference = tokenizer.tokenize(fields[6]);
        let human_score = parse_human_score(fields[7], lineno)?;

        // Rows of one segment are contiguous, one per reference label.
        if let Some(current) = segments.last_mut().filter(|s| s.key() == key) {
            if current.source != source
                || current.candidate != candidate
                || current.human_score != human_score
            {
                return Err(Error::parse(
                    lineno,
                    format!("rows for {key} disagree on source, candidate or human_score"),
                ));
            }
            current
                .references
                .insert(label, reference)
                .map_err(|_| Error::DuplicateKey(format!("{key} reference {label} (line {lineno})")))?;
            continue;
        }
        if let Some(prev) = segments.last() {
            finished.insert(prev.key());
        }
        if finished.contains(&key) {
            return Err(Error::DuplicateKey(format!("{key} (line {lineno})")));
        }
        let mut references = ReferenceSet::new();
        references.insert(label, reference)?;
        segments.push(RatedSegment {
            lang_pair: key.lang_pair,
            segment_id,
            system_id: key.system_id,
            source,
            candidate,
            references,
            human_score,
        });
    }
    RatingsCorpus::new(segments)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonSegment {
    lang_pair: String,
    segment_id: u64,
    system_id: String,
    source: String,
    candidate: String,
    references: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    human_score: Option<f64>,
}

fn read_jsonl<R: BufRead>(reader: R, tokenizer: Tokenizer) -> Result<RatingsCorpus> {
    let mut segments = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io("<ratings>", e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let rec: JsonSegment =
            serde_json::from_str(trimmed).map_err(|e| Error::parse(lineno, e.to_string()))?;
        if rec.references.is_empty() {
            return Err(Error::parse(lineno, "references object is empty"));
        }
        if rec.lang_pair.is_empty() || rec.system_id.is_empty() {
            return Err(Error::parse(lineno, "empty lang_pair or system_id"));
        }
        let human_score = match rec.human_score {
            Some(v) if !(0.0..=100.0).contains(&v) => {
                return Err(Error::Range { line: lineno, value: v })
            }
            other => other,
        };
        let mut references = ReferenceSet::new();
        for (label, text) in &rec.references {
            references
                .insert(label.as_str(), tokenizer.tokenize(text))
                .map_err(|e| Error::parse(lineno, e.to_string()))?;
        }
        let seg = RatedSegment {
            lang_pair: rec.lang_pair,
            segment_id: rec.segment_id,
            system_id: rec.system_id,
            source: tokenizer.tokenize(&rec.source),
            candidate: tokenizer.tokenize(&rec.candidate),
            references,
            human_score,
        };
        if !seen.insert(seg.key()) {
            return Err(Error::DuplicateKey(format!("{} (line {lineno})", seg.key())));
        }
        segments.push(seg);
    }
    RatingsCorpus::new(segments)
}

fn format_score(h: Option<f64>) -> String {
    h.map(|v| v.to_string()).unwrap_or_default()
}

/// Serializes a corpus; re-parsing the output yields an equal corpus.
pub fn to_string(corpus: &RatingsCorpus, format: CorpusFormat) -> String {
    let mut out = String::new();
    match format {
        CorpusFormat::Tsv => {
            out.push_str(TSV_HEADER);
            out.push('\n');
            for seg in corpus {
                for (label, reference) in seg.references.iter() {
                    out.push_str(&format!(
                        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                        seg.lang_pair,
                        seg.segment_id,
                        seg.system_id,
                        seg.source,
                        seg.candidate,
                        label,
                        reference,
                        format_score(seg.human_score)
                    ));
                }
            }
        }
        CorpusFormat::Jsonl => {
            for seg in corpus {
                let rec = JsonSegment {
                    lang_pair: seg.lang_pair.clone(),
                    segment_id: seg.segment_id,
                    system_id: seg.system_id.clone(),
                    source: seg.source.text(),
                    candidate: seg.candidate.text(),
                    references: seg
                        .references
                        .iter()
                        .map(|(l, s)| (l.to_owned(), s.text()))
                        .collect(),
                    human_score: seg.human_score,
                };
                out.push_str(&serde_json::to_string(&rec).expect("plain struct serializes"));
                out.push('\n');
            }
        }
    }
    out
}

/// Splits off a uniformly sampled holdout of `round_half_up(fraction * N)`
/// segments. Both halves keep corpus order.
pub fn split_corpus(
    corpus: &RatingsCorpus,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(RatingsCorpus, RatingsCorpus)> {
    if !(0.0..=1.0).contains(&holdout_fraction) {
        return Err(Error::Argument(format!(
            "holdout fraction {holdout_fraction} outside [0, 1]"
        )));
    }
    if corpus.is_empty() {
        return Err(Error::Argument("cannot split an empty corpus".into()));
    }
    let n = corpus.len();
    let k = holdout_size(n, holdout_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; n];
    for i in rand::seq::index::sample(&mut rng, n, k) {
        chosen[i] = true;
    }
    let (mut train, mut holdout) = (Vec::with_capacity(n - k), Vec::with_capacity(k));
    for (seg, pick) in corpus.segments.iter().zip(chosen) {
        if pick {
            holdout.push(seg.clone());
        } else {
            train.push(seg.clone());
        }
    }
    Ok((RatingsCorpus { segments: train }, RatingsCorpus { segments: holdout }))
}

pub(crate) fn holdout_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64 + 0.5).floor() as usize).min(n)
}

/// Concatenates corpora in order, rejecting keys present in more than one.
pub fn merge_corpora<'a, I>(corpora: I) -> Result<RatingsCorpus>
where
    I: IntoIterator<Item = &'a RatingsCorpus>,
{
    let mut seen = HashSet::new();
    let mut segments = Vec::new();
    for corpus in corpora {
        for seg in corpus {
            if !seen.insert(seg.key()) {
                return Err(Error::DuplicateKey(seg.key().to_string()));
            }
            segments.push(seg.clone());
        }
    }
    Ok(RatingsCorpus { segments })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tsv(rows: &[&str]) -> String {
        let mut s = String::from(TSV_HEADER);
        s.push('\n');
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    fn parse(text: &str) -> Result<RatingsCorpus> {
        read_ratings(text.as_bytes(), CorpusFormat::Tsv, Tokenizer::Whitespace)
    }

    pub(crate) fn synthetic(n: usize) -> RatingsCorpus {
        let segments = (0..n)
            .map(|i| RatedSegment {
                lang_pair: "en-de".into(),
                segment_id: i as u64,
                system_id: "sys".into(),
                source: Sentence::from_tokens(["a"]),
                candidate: Sentence::from_tokens(["b"]),
                references: [("std1", Sentence::from_tokens(["c"]))].into_iter().collect(),
                human_score: Some((i % 101) as f64),
            })
            .collect();
        RatingsCorpus::new(segments).unwrap()
    }

    #[test]
    fn four_line_tsv_has_four_segments() {
        let text = tsv(&[
            "en-de\t1\tA\tthe cat\tdie katze\tstd1\tdie katze\t80",
            "en-de\t1\tB\tthe cat\tder hund\tstd1\tdie katze\t20",
            "en-de\t2\tA\ta dog\tein hund\tstd1\tein hund\t90",
            "en-de\t2\tB\ta dog\teine katze\tstd1\tein hund\t",
        ]);
        let corpus = parse(&text).unwrap();
        assert_eq!(corpus.len(), 4);
        assert_eq!(corpus.segments()[3].human_score, None);
    }

    #[test]
    fn multiple_reference_rows_fold_into_one_segment() {
        let text = tsv(&[
            "en-de\t1\tA\tthe cat\tdie katze\tstd1\tdie katze\t80",
            "en-de\t1\tA\tthe cat\tdie katze\tpara\tdas kätzchen\t80",
        ]);
        let corpus = parse(&text).unwrap();
        assert_eq!(corpus.len(), 1);
        let labels: Vec<_> = corpus.segments()[0].references.labels().collect();
        assert_eq!(labels, ["para", "std1"]);
    }

    #[test]
    fn out_of_range_score_names_line() {
        let text = tsv(&["en-de\t1\tA\tx\ty\tstd1\tz\t130"]);
        match parse(&text) {
            Err(Error::Range { line, value }) => {
                assert_eq!(line, 2);
                assert_eq!(value, 130.0);
            }
            other => panic!("expected range error, got {other:?}"),
        }
    }

    #[test]
    fn header_only_is_empty_corpus() {
        assert_eq!(parse(&tsv(&[])).unwrap().len(), 0);
    }

    #[test]
    fn wrong_field_count_is_parse_error_with_line() {
        let text = tsv(&["# comment", "en-de\t1\tA\tx\ty\tstd1\tz"]);
        match parse(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn repeated_key_is_duplicate() {
        let text = tsv(&[
            "en-de\t1\tA\tx\ty\tstd1\tz\t10",
            "en-de\t2\tA\tx\ty\tstd1\tz\t10",
            "en-de\t1\tA\tx\ty\tstd2\tz\t10",
        ]);
        assert!(matches!(parse(&text), Err(Error::DuplicateKey(_))));
        let text = tsv(&["en-de\t1\tA\tx\ty\tstd1\tz\t10", "en-de\t1\tA\tx\ty\tstd1\tz\t10"]);
        assert!(matches!(parse(&text), Err(Error::DuplicateKey(_))));
    }

    #[test]
    fn inconsistent_rows_for_one_key_are_rejected() {
        let text = tsv(&["en-de\t1\tA\tx\ty\tstd1\tz\t10", "en-de\t1\tA\tx\ty\tstd2\tz\t11"]);
        assert!(matches!(parse(&text), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn tokenizer_normalizes_and_lowercases() {
        // "e" + combining acute composes to U+00E9 under NFC.
        let s = Tokenizer::Whitespace.tokenize("  Cafe\u{301}  DU\tMonde ");
        assert_eq!(s.tokens(), ["caf\u{e9}", "du", "monde"]);
        let p = Tokenizer::Pretokenized.tokenize("##Ab Cd");
        assert_eq!(p.tokens(), ["##Ab", "Cd"]);
        assert!("bogus".parse::<Tokenizer>().is_err());
    }

    #[test]
    fn jsonl_parses_and_rejects_range() {
        let good = r#"{"lang_pair":"en-de","segment_id":3,"system_id":"A","source":"a b","candidate":"c","references":{"std1":"c","para":"d"},"human_score":55.5}
{"lang_pair":"en-de","segment_id":3,"system_id":"B","source":"a b","candidate":"e","references":{"std1":"c"}}"#;
        let c = read_ratings(good.as_bytes(), CorpusFormat::Jsonl, Tokenizer::Whitespace).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.segments()[0].references.len(), 2);
        assert_eq!(c.segments()[1].human_score, None);

        let bad = r#"{"lang_pair":"en-de","segment_id":3,"system_id":"A","source":"a","candidate":"c","references":{"std1":"c"},"human_score":-1}"#;
        assert!(matches!(
            read_ratings(bad.as_bytes(), CorpusFormat::Jsonl, Tokenizer::Whitespace),
            Err(Error::Range { line: 1, .. })
        ));
    }

    #[test]
    fn split_degenerate_and_arithmetic() {
        let c = synthetic(100);
        let (train, holdout) = split_corpus(&c, 0.0, 1).unwrap();
        assert!(holdout.is_empty());
        assert_eq!(train, c);
        let (train, holdout) = split_corpus(&c, 0.1, 1).unwrap();
        assert_eq!((train.len(), holdout.len()), (90, 10));
        let (train, holdout) = split_corpus(&c, 1.0, 1).unwrap();
        assert_eq!((train.len(), holdout.len()), (0, 100));
    }

    #[test]
    fn split_rounds_half_up() {
        assert_eq!(holdout_size(5, 0.5), 3);
        assert_eq!(holdout_size(15, 0.1), 2);
        assert_eq!(holdout_size(14, 0.1), 1);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let c = synthetic(3);
        assert!(matches!(split_corpus(&c, 1.5, 0), Err(Error::Argument(_))));
        assert!(matches!(split_corpus(&c, -0.1, 0), Err(Error::Argument(_))));
        assert!(matches!(split_corpus(&RatingsCorpus::empty(), 0.1, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn split_seed_behaviour() {
        let c = synthetic(1000);
        let ids = |seed| -> Vec<SegmentKey> { split_corpus(&c, 0.1, seed).unwrap().1.keys().collect() };
        assert_eq!(ids(42), ids(42));
        assert_ne!(ids(42), ids(43));
    }

    #[test]
    fn merge_counts_and_duplicates() {
        let a = synthetic(3);
        let b = RatingsCorpus::new(
            synthetic(2)
                .segments()
                .iter()
                .cloned()
                .map(|mut s| {
                    s.system_id = "other".into();
                    s
                })
                .collect(),
        )
        .unwrap();
        let merged = merge_corpora([&a, &b]).unwrap();
        assert_eq!(merged.len(), 5);
        assert_eq!(merged.segments()[3].system_id, "other");
        assert!(matches!(merge_corpora([&a, &a]), Err(Error::DuplicateKey(_))));
        assert!(merge_corpora(std::iter::empty()).unwrap().is_empty());
    }

    #[test]
    fn unique_references_dedupes_across_systems() {
        let text = tsv(&[
            "en-de\t1\tA\tx\ty\tstd1\tz w\t10",
            "en-de\t1\tB\tx\tq\tstd1\tz w\t10",
            "en-de\t2\tA\tx\ty\tstd1\tz\t10",
        ]);
        assert_eq!(parse(&text).unwrap().unique_references().len(), 2);
    }
}
