use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use crate::corpus::Sentence;
use crate::error::{Error, Result};

/// Smoothed inverse document frequencies:
/// `weight(t) = ln((|D| + 1) / (df(t) + 1)) + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    doc_count: u64,
    df: BTreeMap<String, u64>,
    weights: BTreeMap<String, f64>,
    default_weight: f64,
}

fn smoothed_idf(doc_count: u64, df: u64) -> f64 {
    ((doc_count as f64 + 1.0) / (df as f64 + 1.0)).ln() + 1.0
}

/// Each sentence is one document; a token counts once per document.
pub fn compute_idf(documents: &[Sentence]) -> Result<IdfTable> {
    if documents.is_empty() {
        return Err(Error::Argument("cannot compute idf over zero documents".into()));
    }
    let mut df: BTreeMap<String, u64> = BTreeMap::new();
    for doc in documents {
        let distinct: HashSet<&str> = doc.tokens().iter().map(String::as_str).collect();
        for t in distinct {
            *df.entry(t.to_owned()).or_default() += 1;
        }
    }
    Ok(IdfTable::from_df(documents.len() as u64, df))
}

impl IdfTable {
    pub fn from_df(doc_count: u64, df: BTreeMap<String, u64>) -> Self {
        let weights = df
            .iter()
            .map(|(t, &n)| (t.clone(), smoothed_idf(doc_count, n)))
            .collect();
        IdfTable {
            doc_count,
            df,
            weights,
            default_weight: smoothed_idf(doc_count, 0),
        }
    }

    /// Every token weighs 1.0.
    pub fn uniform() -> Self {
        IdfTable {
            doc_count: 0,
            df: BTreeMap::new(),
            weights: BTreeMap::new(),
            default_weight: 1.0,
        }
    }

    pub fn doc_count(&self) -> u64 {
        self.doc_count
    }

    pub fn default_weight(&self) -> f64 {
        self.default_weight
    }

    pub fn weight(&self, token: &str) -> f64 {
        self.weights.get(token).copied().unwrap_or(self.default_weight)
    }

    pub fn df(&self, token: &str) -> u64 {
        self.df.get(token).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `# doc_count\t<n>`, a `token\tdf\tweight` header, then one row per
    /// token in sorted order.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("# doc_count\t{}\ntoken\tdf\tweight\n", self.doc_count);
        for (token, w) in &self.weights {
            let _ = writeln!(out, "{token}\t{}\t{w}", self.df[token]);
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let doc_count = match lines.next() {
            Some((_, l)) => l
                .strip_prefix("# doc_count\t")
                .and_then(|n| n.trim().parse::<u64>().ok())
                .ok_or_else(|| Error::parse(1, "expected '# doc_count\\t<n>'"))?,
            None => return Err(Error::parse(1, "empty idf file")),
        };
        match lines.next() {
            Some((_, "token\tdf\tweight")) => {}
            _ => return Err(Error::parse(2, "expected header 'token\\tdf\\tweight'")),
        }
        let mut df = BTreeMap::new();
        let mut weights = BTreeMap::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(lineno, "expected token, df, weight"));
            }
            let n: u64 = fields[1]
                .parse()
                .map_err(|_| Error::parse(lineno, "df is not an integer"))?;
            let w: f64 = fields[2]
                .parse()
                .map_err(|_| Error::parse(lineno, "weight is not a number"))?;
            if !w.is_finite() {
                return Err(Error::parse(lineno, "weight is not finite"));
            }
            df.insert(fields[0].to_owned(), n);
            weights.insert(fields[0].to_owned(), w);
        }
        Ok(IdfTable {
            doc_count,
            df,
            weights,
            default_weight: smoothed_idf(doc_count, 0),
        })
    }
}
