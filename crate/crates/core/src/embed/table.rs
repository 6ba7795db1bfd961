use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::binio::{self, FormatError, Reader, Writer};

use super::subword::{bucket, ngrams};
use super::{EmbeddingConfig, EmbeddingError};

const MAGIC: &[u8; 8] = b"AOTE-EMB";
const VERSION: u32 = 1;

/// Word vectors plus hashed subword vectors.
///
/// Only buckets hit by some vocabulary word's n-grams are materialized; every
/// other bucket is implicitly untrained and never contributes to a lookup.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub(super) config: EmbeddingConfig,
    pub(super) words: Vec<String>,
    pub(super) counts: Vec<u64>,
    pub(super) index: HashMap<String, usize>,
    /// `|V| × dim`, row-major.
    pub(super) word_vectors: Vec<f64>,
    /// Sorted bucket ids owning a row of `ngram_vectors`.
    pub(super) bucket_ids: Vec<u32>,
    pub(super) ngram_vectors: Vec<f64>,
    /// Per word, rows of `ngram_vectors` for its n-grams.
    pub(super) subword_rows: Vec<Vec<usize>>,
}

impl PartialEq for EmbeddingTable {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.words == other.words
            && self.counts == other.counts
            && self.word_vectors == other.word_vectors
            && self.bucket_ids == other.bucket_ids
            && self.ngram_vectors == other.ngram_vectors
    }
}

impl EmbeddingTable {
    /// Assembles a table from its stored parts, rebuilding lookup caches.
    pub(super) fn from_parts(
        config: EmbeddingConfig,
        words: Vec<String>,
        counts: Vec<u64>,
        word_vectors: Vec<f64>,
        bucket_ids: Vec<u32>,
        ngram_vectors: Vec<f64>,
    ) -> Result<Self, EmbeddingError> {
        let dim = config.dim;
        if word_vectors.len() != words.len() * dim
            || ngram_vectors.len() != bucket_ids.len() * dim
            || counts.len() != words.len()
        {
            return Err(EmbeddingError::Format(FormatError::Invalid(
                "vector block sizes disagree with vocabulary".into(),
            )));
        }
        if !bucket_ids.windows(2).all(|w| w[0] < w[1]) {
            return Err(EmbeddingError::Format(FormatError::Invalid("bucket ids not sorted".into())));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(EmbeddingError::Format(FormatError::Invalid(format!("duplicate word {w:?}"))));
            }
        }
        let mut table = EmbeddingTable {
            config,
            words,
            counts,
            index,
            word_vectors,
            bucket_ids,
            ngram_vectors,
            subword_rows: Vec::new(),
        };
        let mut subword_rows = Vec::with_capacity(table.words.len());
        for w in &table.words {
            let rows = table.known_rows(w);
            if rows.len() != table.ngram_count(w) {
                return Err(EmbeddingError::Format(FormatError::Invalid(format!(
                    "n-gram bucket missing for {w:?}"
                ))));
            }
            subword_rows.push(rows);
        }
        table.subword_rows = subword_rows;
        Ok(table)
    }

    fn ngram_count(&self, word: &str) -> usize {
        ngrams(word, self.config.n_min, self.config.n_max).len()
    }

    /// Rows for the n-grams of `word` whose bucket is materialized.
    fn known_rows(&self, word: &str) -> Vec<usize> {
        ngrams(word, self.config.n_min, self.config.n_max)
            .iter()
            .filter_map(|g| self.bucket_ids.binary_search(&bucket(g, self.config.buckets)).ok())
            .collect()
    }

    pub fn config(&self) -> &EmbeddingConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn count(&self, word: &str) -> Option<u64> {
        self.index.get(word).map(|&i| self.counts[i])
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// The stored (uncomposed) word row.
    pub fn word_row(&self, word: &str) -> Option<&[f64]> {
        let d = self.config.dim;
        self.index.get(word).map(|&i| &self.word_vectors[i * d..(i + 1) * d])
    }

    pub fn ngram_buckets(&self) -> usize {
        self.bucket_ids.len()
    }

    pub(super) fn ngram_row(&self, row: usize) -> &[f64] {
        let d = self.config.dim;
        &self.ngram_vectors[row * d..(row + 1) * d]
    }

    /// In-vocabulary words average their word row and n-gram rows; unknown
    /// words average the rows of their known n-grams, or are zero if none are.
    pub fn vector(&self, word: &str) -> Vec<f64> {
        let d = self.config.dim;
        let mut out = vec![0.0; d];
        let (rows, own) = match self.index.get(word) {
            Some(&i) => (self.subword_rows[i].clone(), Some(i)),
            None => (self.known_rows(word), None),
        };
        let count = rows.len() + usize::from(own.is_some());
        if count == 0 {
            return out;
        }
        if let Some(i) = own {
            for (o, v) in out.iter_mut().zip(&self.word_vectors[i * d..(i + 1) * d]) {
                *o += v;
            }
        }
        for r in rows {
            for (o, v) in out.iter_mut().zip(self.ngram_row(r)) {
                *o += v;
            }
        }
        let scale = 1.0 / count as f64;
        out.iter_mut().for_each(|o| *o *= scale);
        out
    }

    pub fn similarity(&self, a: &str, b: &str) -> f64 {
        crate::tensor::cosine(&self.vector(a), &self.vector(b))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut w = Writer::new(MAGIC, VERSION);
        for v in [c.dim, c.epochs, c.window, c.negatives, c.n_min, c.n_max, c.min_count] {
            w.u64(v as u64);
        }
        w.u32(c.buckets);
        w.f64(c.lr);
        w.u64(c.seed);
        w.u64(self.words.len() as u64);
        for (word, &count) in self.words.iter().zip(&self.counts) {
            w.str(word);
            w.u64(count);
        }
        w.f64s(&self.word_vectors);
        w.u64(self.bucket_ids.len() as u64);
        for &b in &self.bucket_ids {
            w.u32(b);
        }
        w.f64s(&self.ngram_vectors);
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, EmbeddingError> {
        let mut r = Reader::open(data, MAGIC, VERSION)?;
        let mut fields = [0usize; 7];
        for f in &mut fields {
            *f = r.usize()?;
        }
        let [dim, epochs, window, negatives, n_min, n_max, min_count] = fields;
        let config = EmbeddingConfig {
            dim,
            epochs,
            window,
            negatives,
            n_min,
            n_max,
            min_count,
            buckets: r.u32()?,
            lr: r.f64()?,
            seed: r.u64()?,
        };
        config.validate()?;
        let vocab = r.usize()?;
        let mut words = Vec::new();
        let mut counts = Vec::new();
        for _ in 0..vocab {
            words.push(r.str()?);
            counts.push(r.u64()?);
        }
        let word_vectors = r.f64s()?;
        let nb = r.usize()?;
        let bucket_ids = (0..nb).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        let ngram_vectors = r.f64s()?;
        r.finish()?;
        EmbeddingTable::from_parts(config, words, counts, word_vectors, bucket_ids, ngram_vectors)
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| EmbeddingError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        let data = std::fs::read(path).map_err(|e| EmbeddingError::io(path, e))?;
        Self::from_bytes(&data)
    }

    /// SHA-256 of the binary serialization.
    pub fn fingerprint(&self) -> String {
        binio::sha256_hex(&self.to_bytes())
    }

    /// `|V| dim` header then one composed vector per vocabulary word,
    /// 17 significant digits per value.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.words.len(), self.config.dim);
        for w in &self.words {
            out.push_str(w);
            for v in self.vector(w) {
                write!(out, " {v:.16e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn save_text(&self, path: &Path) -> Result<(), EmbeddingError> {
        std::fs::write(path, self.to_text()).map_err(|e| EmbeddingError::io(path, e))
    }
}

/// Plain vectors read back from the text format.
#[derive(Debug, Clone, PartialEq)]
pub struct TextVectors {
    pub dim: usize,
    pub words: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

impl TextVectors {
    pub fn parse(text: &str) -> Result<Self, EmbeddingError> {
        let bad = |line: usize, msg: &str| EmbeddingError::Format(FormatError::Invalid(format!("line {line}: {msg}")));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad(1, "missing header"))?;
        let mut parts = header.split(' ');
        let (Some(v), Some(d), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad(1, "header must be `|V| dim`"));
        };
        let count: usize = v.parse().map_err(|_| bad(1, "bad vocabulary size"))?;
        let dim: usize = d.parse().map_err(|_| bad(1, "bad dimension"))?;
        let mut words = Vec::with_capacity(count);
        let mut vectors = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let mut fields = line.split(' ');
            let word = fields.next().filter(|w| !w.is_empty()).ok_or_else(|| bad(i + 2, "missing word"))?;
            let vec: Vec<f64> = fields
                .map(|f| f.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad(i + 2, "bad number"))?;
            if vec.len() != dim {
                return Err(bad(i + 2, "wrong vector length"));
            }
            words.push(word.to_string());
            vectors.push(vec);
        }
        if words.len() != count {
            return Err(bad(count + 1, "row count disagrees with header"));
        }
        Ok(TextVectors { dim, words, vectors })
    }
}
