//! Token-embedding storage.
//!
//! Metrics never talk to an encoder. They read per-sentence token matrices
//! from an [`EmbeddingStore`], which is either built in-process by the
//! deterministic [`toy_embed`] or loaded from an `.mtes` file written by an
//! external exporter. One store holds vectors from exactly one
//! `(encoder, layer)`; comparing layers means comparing two stores.

mod format;
mod idf;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{Sentence, Tokenizer};
use crate::error::{Error, Result};

pub use format::{
    append_store, parse_sentence_map, read_store, read_store_with_map, write_store, STORE_MAGIC, STORE_VERSION,
};
pub use idf::{compute_idf, IdfTable};

pub const TOY_ENCODER_ID: &str = "toy";

/// Token matrix for one sentence, row-major `len x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEmbedding {
    tokens: Vec<String>,
    dim: usize,
    matrix: Vec<f64>,
    pooled_pair: Option<Vec<f64>>,
    encoder_id: String,
    layer: u16,
}

impl SentenceEmbedding {
    pub fn new(
        tokens: Vec<String>,
        dim: usize,
        matrix: Vec<f64>,
        pooled_pair: Option<Vec<f64>>,
        encoder_id: impl Into<String>,
        layer: u16,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("embedding dim must be positive".into()));
        }
        if matrix.len() != tokens.len() * dim {
            return Err(Error::Consistency(format!(
                "matrix has {} values, expected {} tokens x {dim}",
                matrix.len(),
                tokens.len()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Consistency("non-finite value in embedding matrix".into()));
        }
        if let Some(p) = &pooled_pair {
            if p.len() != dim {
                return Err(Error::Consistency(format!(
                    "pooled pair vector has width {}, expected {dim}",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Consistency("non-finite value in pooled pair vector".into()));
            }
        }
        Ok(SentenceEmbedding {
            tokens,
            dim,
            matrix,
            pooled_pair,
            encoder_id: encoder_id.into(),
            layer,
        })
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

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.matrix.chunks_exact(self.dim)
    }

    pub fn pooled_pair(&self) -> Option<&[f64]> {
        self.pooled_pair.as_deref()
    }

    pub fn encoder_id(&self) -> &str {
        &self.encoder_id
    }

    pub fn layer(&self) -> u16 {
        self.layer
    }

    /// Column-wise mean of the token rows.
    pub fn mean_vector(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    pub fn with_pooled_pair(mut self, pooled: Vec<f64>) -> Result<Self> {
        if pooled.len() != self.dim || pooled.iter().any(|v| !v.is_finite()) {
            return Err(Error::Consistency("bad pooled pair vector".into()));
        }
        self.pooled_pair = Some(pooled);
        Ok(self)
    }

    /// Rounds every value to the nearest binary32, the precision the store
    /// file keeps.
    fn quantize(&mut self) {
        let q = |v: &mut f64| *v = *v as f32 as f64;
        self.matrix.iter_mut().for_each(q);
        if let Some(p) = self.pooled_pair.as_mut() {
            p.iter_mut().for_each(q);
        }
    }
}

/// Stable 64-bit key of a token sequence: first 8 bytes (LE) of the SHA-256
/// of the NFC-normalized tokens joined by U+001F.
pub fn sentence_key<S: AsRef<str>>(tokens: &[S]) -> u64 {
    let mut hasher = Sha256::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            hasher.update([0x1f]);
        }
        let normalized: String = t.as_ref().nfc().collect();
        hasher.update(normalized.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest has 32 bytes"))
}

/// Unit-norm pseudo-random vector that depends only on `(token, dim, seed)`.
pub fn toy_vector(token: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut hasher = Sha256::new();
    hasher.update(token.as_bytes());
    hasher.update([0x1f]);
    hasher.update(seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(hasher.finalize().into());
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Context-free stand-in for encoder output: each token gets its
/// [`toy_vector`]. Tagged `encoder_id = "toy"`, `layer = 0`.
pub fn toy_embed(sentence: &Sentence, dim: usize, seed: u64) -> Result<SentenceEmbedding> {
    if dim < 2 {
        return Err(Error::Argument(format!("toy embedding dim must be >= 2, got {dim}")));
    }
    let matrix = sentence
        .tokens()
        .iter()
        .flat_map(|t| toy_vector(t, dim, seed))
        .collect();
    SentenceEmbedding::new(sentence.tokens().to_vec(), dim, matrix, None, TOY_ENCODER_ID, 0)
}

/// Sentence-keyed embeddings from one `(encoder, layer)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    encoder_id: String,
    layer: u16,
    entries: BTreeMap<u64, SentenceEmbedding>,
    /// Sentence text to entry key, from an exporter's `.map` sidecar.
    aliases: BTreeMap<String, u64>,
}

impl EmbeddingStore {
    pub fn new(dim: usize, encoder_id: impl Into<String>, layer: u16) -> Result<Self> {
        if dim == 0 || dim > u32::MAX as usize {
            return Err(Error::Argument(format!("store dim {dim} out of range")));
        }
        let encoder_id = encoder_id.into();
        if encoder_id.len() > u16::MAX as usize {
            return Err(Error::Argument("encoder id too long".into()));
        }
        Ok(EmbeddingStore {
            dim,
            encoder_id,
            layer,
            entries: BTreeMap::new(),
            aliases: BTreeMap::new(),
        })
    }

    /// Toy store holding every sentence given.
    pub fn toy<'a, I>(sentences: I, dim: usize, seed: u64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Sentence>,
    {
        let mut store = EmbeddingStore::new(dim, TOY_ENCODER_ID, 0)?;
        for s in sentences {
            store.insert(toy_embed(s, dim, seed)?)?;
        }
        Ok(store)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn encoder_id(&self) -> &str {
        &self.encoder_id
    }

    pub fn layer(&self) -> u16 {
        self.layer
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &SentenceEmbedding)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    /// Adds an entry, rounding its values to binary32. Returns `false` when
    /// the same token sequence is already present (the existing entry is
    /// kept). A different sequence under the same key is a collision.
    pub fn insert(&mut self, mut embedding: SentenceEmbedding) -> Result<bool> {
        if embedding.dim != self.dim {
            return Err(Error::Consistency(format!(
                "entry dim {} does not match store dim {}",
                embedding.dim, self.dim
            )));
        }
        if embedding.encoder_id != self.encoder_id || embedding.layer != self.layer {
            return Err(Error::Consistency(format!(
                "entry from {}@{} does not match store {}@{}",
                embedding.encoder_id, embedding.layer, self.encoder_id, self.layer
            )));
        }
        let key = sentence_key(&embedding.tokens);
        if let Some(existing) = self.entries.get(&key) {
            if existing.tokens != embedding.tokens {
                return Err(Error::Consistency(format!(
                    "sentence key collision between {:?} and {:?}",
                    existing.tokens.join(" "),
                    embedding.tokens.join(" ")
                )));
            }
            return Ok(false);
        }
        embedding.quantize();
        self.entries.insert(key, embedding);
        Ok(true)
    }

    /// Inserts every entry of `other`; both stores must share dim, encoder
    /// and layer.
    pub fn merge(&mut self, other: &EmbeddingStore) -> Result<()> {
        if other.dim != self.dim || other.encoder_id != self.encoder_id || other.layer != self.layer
        {
            return Err(Error::Consistency(format!(
                "cannot merge store {}@{} dim {} into {}@{} dim {}",
                other.encoder_id, other.layer, other.dim, self.encoder_id, self.layer, self.dim
            )));
        }
        for e in other.entries.values() {
            self.insert(e.clone())?;
        }
        Ok(())
    }

    /// By token sequence first, then through the sentence map.
    pub fn get(&self, sentence: &Sentence) -> Option<&SentenceEmbedding> {
        self.get_tokens(sentence.tokens()).or_else(|| {
            let key = self.aliases.get(&sentence.text())?;
            self.entries.get(key)
        })
    }

    /// Lets sentences whose own tokens are not in the store resolve to an
    /// entry keyed over encoder subwords. Map keys are matched against the
    /// space-joined tokens, both as given and whitespace-normalized.
    pub fn attach_sentence_map(&mut self, map: &BTreeMap<String, u64>) {
        for (raw, &key) in map {
            let collapsed = Tokenizer::Pretokenized.tokenize(raw).text();
            let normalized = Tokenizer::Whitespace.tokenize(raw).text();
            self.aliases.insert(collapsed, key);
            self.aliases.entry(normalized).or_insert(key);
        }
    }

    pub fn alias_count(&self) -> usize {
        self.aliases.len()
    }

    pub fn get_tokens(&self, tokens: &[String]) -> Option<&SentenceEmbedding> {
        self.entries
            .get(&sentence_key(tokens))
            .filter(|e| e.tokens == tokens)
    }

    pub fn lookup(&self, sentence: &Sentence) -> Result<&SentenceEmbedding> {
        self.get(sentence)
            .ok_or_else(|| Error::MissingEmbedding(sentence.text()))
    }

    pub(crate) fn from_parts(
        dim: usize,
        encoder_id: String,
        layer: u16,
        entries: BTreeMap<u64, SentenceEmbedding>,
    ) -> Self {
        EmbeddingStore {
            dim,
            encoder_id,
            layer,
            entries,
            aliases: BTreeMap::new(),
        }
    }
}
