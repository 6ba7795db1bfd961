//! INI-style configuration: `key = value` pairs grouped into sections.
//!
//! | section      | keys |
//! |--------------|------|
//! | `experiment` | `scenario`, `seed`, `out` |
//! | `data`       | `train`, `val`, `general`, `domain`, `hybrid`, `previous` |
//! | `model`      | `architecture`, `rnn`, `hidden`, `layers`, `k`, `dropout`, `embedding`, `seed` |
//! | `train`      | `batch_size`, `max_epochs`, `patience`, `lr`, `beta1`, `beta2`, `epsilon`, `seed` |
//! | `embedding`  | `preset`, `dim`, `epochs`, `window`, `negatives`, `min_n`, `max_n`, `min_count`, `buckets`, `lr`, `seed` |
//! | `sweep`      | `rnn`, `embedding`, `hidden`, `layers`, `k`, `dropout`, `architecture` (comma-separated lists) |
//!
//! Unknown sections and keys are rejected so typos never silently fall back
//! to defaults.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use ini::Ini;

use crate::embed::{EmbeddingConfig, EmbeddingMode};
use crate::model::{Architecture, ModelConfig, RnnVariant};
use crate::trainer::TrainConfig;

const SCHEMA: &[(&str, &[&str])] = &[
    ("experiment", &["scenario", "seed", "out"]),
    ("data", &["train", "val", "general", "domain", "hybrid", "previous"]),
    ("model", &["architecture", "rnn", "hidden", "layers", "k", "dropout", "embedding", "seed"]),
    ("train", &["batch_size", "max_epochs", "patience", "lr", "beta1", "beta2", "epsilon", "seed"]),
    (
        "embedding",
        &["preset", "dim", "epochs", "window", "negatives", "min_n", "max_n", "min_count", "buckets", "lr", "seed"],
    ),
    ("sweep", &["rnn", "embedding", "hidden", "layers", "k", "dropout", "architecture"]),
];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("unknown config section [{0}]")]
    UnknownSection(String),
    #[error("unknown key `{key}` in [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("[{section}] {key} = {value:?}: {reason}")]
    Value {
        section: String,
        key: String,
        value: String,
        reason: String,
    },
    #[error("[{section}] {key} is required")]
    Missing { section: String, key: String },
}

#[derive(Debug, Clone, Default)]
pub struct Config {
    ini: Ini,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let ini = Ini::load_from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let config = Config { ini };
        config.check_schema()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    fn check_schema(&self) -> Result<(), ConfigError> {
        for (section, props) in self.ini.iter() {
            let Some(name) = section else {
                if let Some((key, _)) = props.iter().next() {
                    return Err(ConfigError::UnknownKey {
                        section: String::new(),
                        key: key.to_string(),
                    });
                }
                continue;
            };
            let Some((_, keys)) = SCHEMA.iter().find(|(s, _)| *s == name) else {
                return Err(ConfigError::UnknownSection(name.to_string()));
            };
            for (key, _) in props.iter() {
                if !keys.contains(&key) {
                    return Err(ConfigError::UnknownKey {
                        section: name.to_string(),
                        key: key.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.ini.section(Some(section)).and_then(|p| p.get(key)).map(str::trim)
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str, ConfigError> {
        self.get(section, key).ok_or_else(|| ConfigError::Missing {
            section: section.into(),
            key: key.into(),
        })
    }

    /// Parsed value, if present.
    pub fn value<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: Display,
    {
        self.get(section, key).map(|v| parse_value(section, key, v)).transpose()
    }

    /// Comma-separated list, if present. An empty list is an error.
    pub fn list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: Display,
    {
        let Some(raw) = self.get(section, key) else {
            return Ok(None);
        };
        let items: Vec<T> = raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| parse_value(section, key, s))
            .collect::<Result<_, _>>()?;
        if items.is_empty() {
            return Err(ConfigError::Value {
                section: section.into(),
                key: key.into(),
                value: raw.into(),
                reason: "empty list".into(),
            });
        }
        Ok(Some(items))
    }

    /// `base` with every `[model]` key present overridden.
    pub fn model(&self, base: ModelConfig) -> Result<ModelConfig, ConfigError> {
        let s = "model";
        let mut c = base;
        set(&mut c.architecture, self.value::<Architecture>(s, "architecture")?);
        set(&mut c.rnn, self.value::<RnnVariant>(s, "rnn")?);
        set(&mut c.hidden_units, self.value(s, "hidden")?);
        set(&mut c.attention_layers, self.value(s, "layers")?);
        set(&mut c.tensor_dim, self.value(s, "k")?);
        set(&mut c.dropout, self.value(s, "dropout")?);
        set(&mut c.embedding_mode, self.value::<EmbeddingMode>(s, "embedding")?);
        set(&mut c.seed, self.value(s, "seed")?);
        Ok(c)
    }

    pub fn train(&self, base: TrainConfig) -> Result<TrainConfig, ConfigError> {
        let s = "train";
        let mut c = base;
        set(&mut c.batch_size, self.value(s, "batch_size")?);
        set(&mut c.max_epochs, self.value(s, "max_epochs")?);
        set(&mut c.patience, self.value(s, "patience")?);
        set(&mut c.lr, self.value(s, "lr")?);
        set(&mut c.beta1, self.value(s, "beta1")?);
        set(&mut c.beta2, self.value(s, "beta2")?);
        set(&mut c.epsilon, self.value(s, "epsilon")?);
        set(&mut c.seed, self.value(s, "seed")?);
        Ok(c)
    }

    /// `[embedding]` settings; `preset` (general/domain/hybrid) picks the
    /// starting point, defaulting to `fallback`.
    pub fn embedding(&self, fallback: EmbeddingMode) -> Result<EmbeddingConfig, ConfigError> {
        let s = "embedding";
        let preset = self.value::<EmbeddingMode>(s, "preset")?.unwrap_or(fallback);
        let mut c = match preset {
            EmbeddingMode::General => EmbeddingConfig::general(),
            EmbeddingMode::Domain => EmbeddingConfig::domain(),
            EmbeddingMode::Hybrid => EmbeddingConfig::hybrid(),
            EmbeddingMode::Double => {
                return Err(ConfigError::Value {
                    section: s.into(),
                    key: "preset".into(),
                    value: "double".into(),
                    reason: "a preset describes one table: general, domain or hybrid".into(),
                })
            }
        };
        set(&mut c.dim, self.value(s, "dim")?);
        set(&mut c.epochs, self.value(s, "epochs")?);
        set(&mut c.window, self.value(s, "window")?);
        set(&mut c.negatives, self.value(s, "negatives")?);
        set(&mut c.n_min, self.value(s, "min_n")?);
        set(&mut c.n_max, self.value(s, "max_n")?);
        set(&mut c.min_count, self.value(s, "min_count")?);
        set(&mut c.buckets, self.value(s, "buckets")?);
        set(&mut c.lr, self.value(s, "lr")?);
        set(&mut c.seed, self.value(s, "seed")?);
        Ok(c)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse_value<T: FromStr>(section: &str, key: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    raw.trim().parse().map_err(|e: T::Err| ConfigError::Value {
        section: section.into(),
        key: key.into(),
        value: raw.into(),
        reason: e.to_string(),
    })
}

/// `[model]` section reproducing `config` (input width excluded: it always
/// comes from the embeddings in use).
pub fn model_section(config: &ModelConfig) -> String {
    format!(
        "[model]\narchitecture = {}\nrnn = {}\nhidden = {}\nlayers = {}\nk = {}\ndropout = {}\nembedding = {}\nseed = {}\n",
        config.architecture,
        config.rnn,
        config.hidden_units,
        config.attention_layers,
        config.tensor_dim,
        config.dropout,
        config.embedding_mode,
        config.seed
    )
}

pub fn train_section(config: &TrainConfig) -> String {
    format!(
        "[train]\nbatch_size = {}\nmax_epochs = {}\npatience = {}\nlr = {}\nbeta1 = {}\nbeta2 = {}\nepsilon = {}\nseed = {}\n",
        config.batch_size,
        config.max_epochs,
        config.patience,
        config.lr,
        config.beta1,
        config.beta2,
        config.epsilon,
        config.seed
    )
}
