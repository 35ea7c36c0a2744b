//! `.mtes` binary store format, all integers little-endian:
//!
//! ```text
//! magic "MTES" | version u16 | dim u32 | layer u16 | encoder_id (u16 len + UTF-8)
//! entry count u64
//! per entry:
//!   key u64
//!   token count u32, then per token: u32 len + UTF-8
//!   matrix: count * dim binary32, row-major
//!   pooled flag u8 (0/1), then dim binary32 when set
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::{sentence_key, EmbeddingStore, SentenceEmbedding};
use crate::error::{Error, Result};
use crate::io_util::write_atomic;

pub const STORE_MAGIC: &[u8; 4] = b"MTES";
pub const STORE_VERSION: u16 = 1;

impl EmbeddingStore {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(STORE_MAGIC);
        out.extend_from_slice(&STORE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&self.layer.to_le_bytes());
        out.extend_from_slice(&(self.encoder_id.len() as u16).to_le_bytes());
        out.extend_from_slice(self.encoder_id.as_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for (key, entry) in &self.entries {
            out.extend_from_slice(&key.to_le_bytes());
            out.extend_from_slice(&(entry.tokens.len() as u32).to_le_bytes());
            for t in &entry.tokens {
                out.extend_from_slice(&(t.len() as u32).to_le_bytes());
                out.extend_from_slice(t.as_bytes());
            }
            for v in &entry.matrix {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
            match &entry.pooled_pair {
                Some(p) => {
                    out.push(1);
                    for v in p {
                        out.extend_from_slice(&(*v as f32).to_le_bytes());
                    }
                }
                None => out.push(0),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < STORE_MAGIC.len() {
            return Err(Error::Corruption("file shorter than the magic header".into()));
        }
        if &bytes[..4] != STORE_MAGIC {
            return Err(Error::Format("bad magic, not an MTES store".into()));
        }
        let mut r = Reader { bytes, pos: 4 };
        let version = r.u16("version")?;
        if version != STORE_VERSION {
            return Err(Error::Format(format!("unsupported store version {version}")));
        }
        let dim = r.u32("dim")? as usize;
        if dim == 0 {
            return Err(Error::Corruption("dim is zero".into()));
        }
        let layer = r.u16("layer")?;
        let id_len = r.u16("encoder id length")? as usize;
        let encoder_id = r.utf8(id_len, "encoder id")?;
        let count = r.u64("entry count")?;

        let mut entries = BTreeMap::new();
        for n in 0..count {
            let key = r.u64("entry key")?;
            let token_count = r.u32("token count")? as usize;
            let mut tokens = Vec::with_capacity(token_count.min(4096));
            for _ in 0..token_count {
                let len = r.u32("token length")? as usize;
                tokens.push(r.utf8(len, "token")?);
            }
            let values = token_count
                .checked_mul(dim)
                .ok_or_else(|| Error::Corruption(format!("entry {n}: matrix size overflows")))?;
            let matrix = r.f32s(values, "matrix")?;
            let pooled_pair = match r.u8("pooled flag")? {
                0 => None,
                1 => Some(r.f32s(dim, "pooled pair vector")?),
                other => {
                    return Err(Error::Corruption(format!("entry {n}: pooled flag {other}")));
                }
            };
            if sentence_key(&tokens) != key {
                return Err(Error::Corruption(format!(
                    "entry {n}: key does not match its token sequence"
                )));
            }
            let entry =
                SentenceEmbedding::new(tokens, dim, matrix, pooled_pair, encoder_id.clone(), layer)
                    .map_err(|e| Error::Corruption(format!("entry {n}: {e}")))?;
            if entries.insert(key, entry).is_some() {
                return Err(Error::Corruption(format!("entry {n}: repeated key")));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Corruption(format!(
                "{} trailing bytes after last entry",
                bytes.len() - r.pos
            )));
        }
        Ok(EmbeddingStore::from_parts(dim, encoder_id, layer, entries))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corruption(format!("truncated while reading {what}")))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("take returns N bytes"))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.array::<1>(what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array(what)?))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    fn utf8(&mut self, len: usize, what: &str) -> Result<String> {
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| Error::Corruption(format!("{what} is not valid UTF-8")))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| Error::Corruption(format!("{what} size overflows")))?;
        Ok(self
            .take(len, what)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
            .collect())
    }
}

pub fn write_store(store: &EmbeddingStore, path: &Path) -> Result<()> {
    write_atomic(path, &store.to_bytes())
}

pub fn read_store(path: &Path) -> Result<EmbeddingStore> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingStore::from_bytes(&bytes)
}

/// Sidecar TSV of `sentence<TAB>key` rows, key in decimal or `0x` hex. A
/// `sentence\tkey` header, blank lines and `#` comments are skipped.
pub fn parse_sentence_map(text: &str) -> Result<BTreeMap<String, u64>> {
    let mut map = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') || (idx == 0 && line == "sentence\tkey") {
            continue;
        }
        let (sentence, key) = line
            .rsplit_once('\t')
            .ok_or_else(|| Error::parse(lineno, "expected sentence<TAB>key"))?;
        let key = key.trim();
        let parsed = match key.strip_prefix("0x") {
            Some(hex) => u64::from_str_radix(hex, 16),
            None => key.parse(),
        }
        .map_err(|_| Error::parse(lineno, format!("bad key {key:?}")))?;
        if let Some(prev) = map.insert(sentence.to_owned(), parsed) {
            if prev != parsed {
                return Err(Error::parse(lineno, format!("sentence mapped to two keys: {sentence:?}")));
            }
        }
    }
    Ok(map)
}

/// Reads a store and, when `<path>.map` exists next to it, attaches that
/// sentence map. Map keys absent from the store are a consistency error.
pub fn read_store_with_map(path: &Path) -> Result<EmbeddingStore> {
    let mut store = read_store(path)?;
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".map");
    let sidecar = Path::new(&sidecar);
    if sidecar.is_file() {
        let map = parse_sentence_map(&crate::io_util::read_to_string(sidecar)?)?;
        if let Some((s, k)) = map.iter().find(|(_, k)| !store.entries.contains_key(k)) {
            return Err(Error::Consistency(format!("sentence map key {k} for {s:?} is not in the store")));
        }
        store.attach_sentence_map(&map);
    }
    Ok(store)
}

/// Adds the entries of `store` to the store file at `path` (created if
/// missing). Fails without touching the file when dim, encoder or layer
/// disagree.
pub fn append_store(path: &Path, store: &EmbeddingStore) -> Result<()> {
    let merged = if path.exists() {
        let mut existing = read_store(path)?;
        existing.merge(store)?;
        existing
    } else {
        store.clone()
    };
    write_store(&merged, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sentence;
    use crate::embedding::toy_embed;

    fn sample_store() -> EmbeddingStore {
        let mut store = EmbeddingStore::new(16, "toy", 0).unwrap();
        for text in ["das haus", "ein kleines haus", "häuser"] {
            let s = Sentence::from_tokens(text.split(' '));
            store.insert(toy_embed(&s, 16, 9).unwrap()).unwrap();
        }
        store
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let store = sample_store();
        let back = EmbeddingStore::from_bytes(&store.to_bytes()).unwrap();
        assert_eq!(back, store);
        for ((_, a), (_, b)) in store.iter().zip(back.iter()) {
            let bits = |e: &SentenceEmbedding| e.matrix().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(back.to_bytes(), store.to_bytes());
    }

    #[test]
    fn every_truncation_is_corruption() {
        let bytes = sample_store().to_bytes();
        for cut in 0..bytes.len() {
            match EmbeddingStore::from_bytes(&bytes[..cut]) {
                Err(Error::Corruption(_)) => {}
                other => panic!("cut at {cut}: expected corruption, got {other:?}"),
            }
        }
    }

    #[test]
    fn bad_magic_and_version_are_format_errors() {
        let mut bytes = sample_store().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(EmbeddingStore::from_bytes(&bytes), Err(Error::Format(_))));
        let mut bytes = sample_store().to_bytes();
        bytes[4] = 9;
        assert!(matches!(EmbeddingStore::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn flipped_token_byte_breaks_key_check() {
        let store = sample_store();
        let mut bytes = store.to_bytes();
        // first token byte of the first entry: header(4+2+4+2+2+3+8) + key 8 + count 4 + len 4
        let pos = 25 + 8 + 4 + 4;
        bytes[pos] ^= 0x01;
        assert!(matches!(EmbeddingStore::from_bytes(&bytes), Err(Error::Corruption(_))));
    }

    #[test]
    fn append_rejects_dim_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.mtes");
        append_store(&path, &sample_store()).unwrap();
        let mut more = EmbeddingStore::new(16, "toy", 0).unwrap();
        more.insert(toy_embed(&Sentence::from_tokens(["neu"]), 16, 9).unwrap()).unwrap();
        append_store(&path, &more).unwrap();
        assert_eq!(read_store(&path).unwrap().len(), 4);

        let wrong = EmbeddingStore::new(8, "toy", 0).unwrap();
        assert!(matches!(append_store(&path, &wrong), Err(Error::Consistency(_))));
        assert_eq!(read_store(&path).unwrap().len(), 4);
    }

    #[test]
    fn sidecar_map_resolves_subword_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("export.mtes");
        let subwords = ["▁the", "▁ca", "t"];
        let key = sentence_key(&subwords);
        let mut store = EmbeddingStore::new(2, "mbert", 9).unwrap();
        let e = SentenceEmbedding::new(
            subwords.iter().map(|s| s.to_string()).collect(),
            2,
            vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.5],
            None,
            "mbert",
            9,
        )
        .unwrap()
        .with_pooled_pair(vec![0.25, 0.75])
        .unwrap();
        store.insert(e).unwrap();
        write_store(&store, &path).unwrap();

        let sentence = Sentence::from_tokens(["the", "cat"]);
        assert!(read_store_with_map(&path).unwrap().get(&sentence).is_none());

        std::fs::write(dir.path().join("export.mtes.map"), format!("sentence\tkey\nThe  cat\t{key}\n")).unwrap();
        let mapped = read_store_with_map(&path).unwrap();
        let hit = mapped.lookup(&sentence).unwrap();
        assert_eq!(hit.tokens(), subwords);
        assert_eq!(hit.pooled_pair(), Some(&[0.25, 0.75][..]));

        std::fs::write(dir.path().join("export.mtes.map"), "x\t0x1\n").unwrap();
        assert!(matches!(read_store_with_map(&path), Err(Error::Consistency(_))));
        assert!(matches!(parse_sentence_map("no tab here\n"), Err(Error::Parse { line: 1, .. })));
        assert_eq!(parse_sentence_map("a b\t0x10\n").unwrap()["a b"], 16);
    }
}
