//! Subword skip-gram embeddings and the input feature layer built from them.

mod subword;
mod table;
mod train;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

pub use subword::{bucket, fnv1a32, ngrams};
pub use table::{EmbeddingTable, TextVectors};
pub use train::{negative_distribution, train, train_with_stats, TrainStats, NEGATIVE_POWER};

pub use crate::tensor::cosine;
use crate::binio::FormatError;
use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("invalid embedding config: {0}")]
    Config(String),
    #[error("corpus has no trainable tokens")]
    EmptyCorpus,
    #[error("training diverged")]
    Diverged,
    #[error("embedding dimension {found} does not match declared {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embedding file: {0}")]
    Format(#[from] FormatError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl EmbeddingError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub epochs: usize,
    /// Maximum context radius; the effective radius is drawn from `1..=window`.
    pub window: usize,
    pub negatives: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub min_count: usize,
    pub buckets: u32,
    pub lr: f64,
    pub seed: u64,
}

impl EmbeddingConfig {
    fn fasttext_defaults(dim: usize, epochs: usize) -> Self {
        EmbeddingConfig {
            dim,
            epochs,
            window: 5,
            negatives: 5,
            n_min: 3,
            n_max: 6,
            min_count: 5,
            buckets: 2_000_000,
            lr: 0.05,
            seed: 0,
        }
    }

    /// General-corpus setting: 300 dimensions, 5 epochs.
    pub fn general() -> Self {
        Self::fasttext_defaults(300, 5)
    }

    /// Domain-corpus setting: 100 dimensions, 30 epochs.
    pub fn domain() -> Self {
        Self::fasttext_defaults(100, 30)
    }

    /// Combined-corpus setting: 300 dimensions, 5 epochs.
    pub fn hybrid() -> Self {
        Self::fasttext_defaults(300, 5)
    }

    /// Stock defaults scaled for small corpora: fewer buckets, no count cutoff.
    pub fn scaled(dim: usize, epochs: usize) -> Self {
        EmbeddingConfig {
            min_count: 1,
            buckets: 100_000,
            ..Self::fasttext_defaults(dim, epochs)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let fail = |m: &str| Err(EmbeddingError::Config(m.into()));
        if self.dim == 0 {
            return fail("dim must be at least 1");
        }
        if self.n_min == 0 || self.n_min > self.n_max {
            return fail("need 1 <= n_min <= n_max");
        }
        if self.buckets == 0 {
            return fail("buckets must be at least 1");
        }
        if self.window == 0 {
            return fail("window must be at least 1");
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return fail("lr must be positive");
        }
        Ok(())
    }
}

/// Which table(s) feed the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingMode {
    Double,
    General,
    Domain,
    Hybrid,
}

impl EmbeddingMode {
    pub const ALL: [EmbeddingMode; 4] = [
        EmbeddingMode::Double,
        EmbeddingMode::General,
        EmbeddingMode::Domain,
        EmbeddingMode::Hybrid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingMode::Double => "double",
            EmbeddingMode::General => "general",
            EmbeddingMode::Domain => "domain",
            EmbeddingMode::Hybrid => "hybrid",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for EmbeddingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmbeddingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown embedding mode {s:?} (expected double, general, domain or hybrid)"))
    }
}

/// General and domain tables looked up side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleEmbedding {
    pub general: EmbeddingTable,
    pub domain: EmbeddingTable,
}

impl DoubleEmbedding {
    pub fn new(general: EmbeddingTable, domain: EmbeddingTable) -> Self {
        DoubleEmbedding { general, domain }
    }

    /// Builds the pair, checking both tables against declared dimensions.
    pub fn with_dims(
        general: EmbeddingTable,
        domain: EmbeddingTable,
        general_dim: usize,
        domain_dim: usize,
    ) -> Result<Self, EmbeddingError> {
        for (table, expected) in [(&general, general_dim), (&domain, domain_dim)] {
            if table.dim() != expected {
                return Err(EmbeddingError::DimensionMismatch {
                    expected,
                    found: table.dim(),
                });
            }
        }
        Ok(Self::new(general, domain))
    }

    pub fn dim(&self) -> usize {
        self.general.dim() + self.domain.dim()
    }

    pub fn lookup(&self, word: &str) -> Vec<f64> {
        let mut v = self.general.vector(word);
        v.extend(self.domain.vector(word));
        v
    }
}

/// The model's input feature layer: one table, or the general/domain pair.
#[derive(Debug, Clone, PartialEq)]
pub enum InputEmbedding {
    Single { mode: EmbeddingMode, table: EmbeddingTable },
    Double(DoubleEmbedding),
}

impl InputEmbedding {
    pub fn single(mode: EmbeddingMode, table: EmbeddingTable) -> Result<Self, EmbeddingError> {
        if mode == EmbeddingMode::Double {
            return Err(EmbeddingError::Config("double mode needs two tables".into()));
        }
        Ok(InputEmbedding::Single { mode, table })
    }

    pub fn mode(&self) -> EmbeddingMode {
        match self {
            InputEmbedding::Single { mode, .. } => *mode,
            InputEmbedding::Double(_) => EmbeddingMode::Double,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            InputEmbedding::Single { table, .. } => table.dim(),
            InputEmbedding::Double(d) => d.dim(),
        }
    }

    pub fn lookup(&self, word: &str) -> Vec<f64> {
        match self {
            InputEmbedding::Single { table, .. } => table.vector(word),
            InputEmbedding::Double(d) => d.lookup(word),
        }
    }

    /// `n × dim` matrix of token features.
    pub fn features<S: AsRef<str>>(&self, tokens: &[S]) -> Tensor {
        let dim = self.dim();
        let mut data = Vec::with_capacity(tokens.len() * dim);
        for t in tokens {
            data.extend(self.lookup(t.as_ref()));
        }
        Tensor::new(vec![tokens.len(), dim], data).expect("lookup yields dim values per token")
    }

    /// Fingerprints of the underlying tables, general before domain.
    pub fn fingerprints(&self) -> Vec<String> {
        match self {
            InputEmbedding::Single { table, .. } => vec![table.fingerprint()],
            InputEmbedding::Double(d) => vec![d.general.fingerprint(), d.domain.fingerprint()],
        }
    }
}
