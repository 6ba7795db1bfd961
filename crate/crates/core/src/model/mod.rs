//! Recurrent encoder + coupled multi-layer attention sequence labeler.
//!
//! Each coupled layer holds one attention per task (aspect, opinion). For
//! task `m` with prototype `uᵐ` and the other task's prototype `u^m̄`:
//!
//! ```text
//! rᵢᵐ  = tanh([hᵢ·Gᵐ·uᵐ ; hᵢ·Dᵐ·u^m̄])        (2K features)
//! αᵐ   = softmax_i(vᵐ·rᵢᵐ)
//! uᵐ'  = uᵐ + Σᵢ αᵢᵐ hᵢ
//! ```
//!
//! The per-token head sees `Σ_layers [rᵢᵃ ; rᵢᵒ]` and emits 5 label logits.

mod network;
mod params;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use params::{ModelParams, FORGET_BIAS, PROTOTYPE_BOUND, WEIGHT_BOUND};

use crate::binio::{self, FormatError, Reader, Writer};
use crate::embed::{EmbeddingMode, InputEmbedding};
use crate::tensor::{Graph, Tensor, TensorError};
use crate::text::{decode_bio, EntitySpan, Label};
use params::Layout;

const MAGIC: &[u8; 8] = b"AOTE-MDL";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("parameter shape: {0}")]
    Shape(String),
    #[error("input has {found} features per token, model expects {expected}")]
    InputDim { expected: usize, found: usize },
    #[error("embedding mode {found} does not match model's {expected}")]
    EmbeddingMode { expected: EmbeddingMode, found: EmbeddingMode },
    #[error("embedding fingerprint mismatch: model was trained with {expected}, got {found}")]
    Fingerprint { expected: String, found: String },
    #[error("empty input sentence")]
    EmptyInput,
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("model file: {0}")]
    Format(#[from] FormatError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ModelError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        ModelError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RnnVariant {
    Gru,
    Lstm,
    BiGru,
    BiLstm,
}

impl RnnVariant {
    pub const ALL: [RnnVariant; 4] = [RnnVariant::Gru, RnnVariant::Lstm, RnnVariant::BiGru, RnnVariant::BiLstm];

    pub fn bidirectional(self) -> bool {
        matches!(self, RnnVariant::BiGru | RnnVariant::BiLstm)
    }

    pub fn is_lstm(self) -> bool {
        matches!(self, RnnVariant::Lstm | RnnVariant::BiLstm)
    }

    /// Stacked gate blocks per weight matrix.
    pub fn gates(self) -> usize {
        if self.is_lstm() {
            4
        } else {
            3
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RnnVariant::Gru => "gru",
            RnnVariant::Lstm => "lstm",
            RnnVariant::BiGru => "b-gru",
            RnnVariant::BiLstm => "b-lstm",
        }
    }

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

impl fmt::Display for RnnVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RnnVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| *c != '-' && *c != '_').collect::<String>().to_lowercase();
        match key.as_str() {
            "gru" => Ok(RnnVariant::Gru),
            "lstm" => Ok(RnnVariant::Lstm),
            "bgru" => Ok(RnnVariant::BiGru),
            "blstm" => Ok(RnnVariant::BiLstm),
            _ => Err(format!("unknown rnn variant {s:?} (expected gru, lstm, b-gru or b-lstm)")),
        }
    }
}

/// Full coupled-attention model, or the attention-free ablation whose head
/// reads encoder states directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Cmla,
    Softmax,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Cmla => "cmla",
            Architecture::Softmax => "softmax",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cmla" => Ok(Architecture::Cmla),
            "softmax" | "ablation" => Ok(Architecture::Softmax),
            _ => Err(format!("unknown architecture {s:?} (expected cmla or softmax)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub rnn: RnnVariant,
    pub hidden_units: usize,
    pub attention_layers: usize,
    pub tensor_dim: usize,
    pub dropout: f64,
    pub embedding_mode: EmbeddingMode,
    pub input_dim: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// B-LSTM, 50 hidden units, 2 coupled layers, K = 20, dropout 0.5, double embeddings.
    pub fn best() -> Self {
        ModelConfig {
            architecture: Architecture::Cmla,
            rnn: RnnVariant::BiLstm,
            hidden_units: 50,
            attention_layers: 2,
            tensor_dim: 20,
            dropout: 0.5,
            embedding_mode: EmbeddingMode::Double,
            input_dim: 400,
            seed: 0,
        }
    }

    /// Width of an encoder state: doubled for bidirectional encoders.
    pub fn state_dim(&self) -> usize {
        if self.rnn.bidirectional() {
            2 * self.hidden_units
        } else {
            self.hidden_units
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: &str| Err(ModelError::Config(m.into()));
        if self.hidden_units == 0 {
            return fail("hidden_units must be at least 1");
        }
        if self.input_dim == 0 {
            return fail("input_dim must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must be in [0, 1)");
        }
        if self.architecture == Architecture::Cmla {
            if self.attention_layers == 0 {
                return fail("attention_layers must be at least 1");
            }
            if self.tensor_dim == 0 {
                return fail("tensor_dim must be at least 1");
            }
        }
        Ok(())
    }
}

/// Path and fingerprint of an embedding table a model was trained against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingRef {
    pub path: String,
    pub fingerprint: String,
}

/// Per-layer attention internals captured from an inference pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// `n × 2K` features per task (aspect, opinion).
    pub r: [Tensor; 2],
    pub alpha: [Vec<f64>; 2],
    /// Prototypes after this layer.
    pub prototypes: [Vec<f64>; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub states: Tensor,
    pub layers: Vec<LayerTrace>,
    pub scores: Tensor,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ModelParams,
    layout: Layout,
    embeddings: Vec<EmbeddingRef>,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params && self.embeddings == other.embeddings
    }
}

/// Per-token argmax; ties resolve to the lowest label code.
pub fn argmax_labels(scores: &Tensor) -> Vec<Label> {
    let cols = Label::COUNT;
    scores
        .data()
        .chunks(cols)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = i;
                }
            }
            Label::from_code(best).expect("five columns")
        })
        .collect()
}

/// Inference never draws from the RNG; this satisfies the signature.
fn inert_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

/// Argmax tags and the spans they decode to.
pub fn decode_scores(scores: &Tensor) -> (Vec<Label>, Vec<EntitySpan>) {
    let tags = argmax_labels(scores);
    let spans = decode_bio(&tags);
    (tags, spans)
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        let params = ModelParams::init(&config)?;
        Self::with_params(config, params)
    }

    pub fn with_params(config: ModelConfig, params: ModelParams) -> Result<Self, ModelError> {
        let params = ModelParams::from_tensors(&config, params.tensors().to_vec())?;
        let (_, _, layout) = params::plan(&config);
        Ok(Model {
            config,
            params,
            layout,
            embeddings: Vec::new(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn set_params(&mut self, params: ModelParams) -> Result<(), ModelError> {
        self.params = ModelParams::from_tensors(&self.config, params.tensors().to_vec())?;
        Ok(())
    }

    pub fn embeddings(&self) -> &[EmbeddingRef] {
        &self.embeddings
    }

    /// Records which embedding tables this model consumes (stored on save).
    pub fn set_embeddings(&mut self, refs: Vec<EmbeddingRef>) {
        self.embeddings = refs;
    }

    /// Checks an input layer against the model's mode, width and recorded fingerprints.
    pub fn check_embedding(&self, emb: &InputEmbedding) -> Result<(), ModelError> {
        if emb.mode() != self.config.embedding_mode {
            return Err(ModelError::EmbeddingMode {
                expected: self.config.embedding_mode,
                found: emb.mode(),
            });
        }
        if emb.dim() != self.config.input_dim {
            return Err(ModelError::InputDim {
                expected: self.config.input_dim,
                found: emb.dim(),
            });
        }
        if !self.embeddings.is_empty() {
            for (r, fp) in self.embeddings.iter().zip(emb.fingerprints()) {
                if r.fingerprint != fp {
                    return Err(ModelError::Fingerprint {
                        expected: r.fingerprint.clone(),
                        found: fp,
                    });
                }
            }
        }
        Ok(())
    }

    fn check_features(&self, features: &Tensor) -> Result<(), ModelError> {
        match *features.shape() {
            [0, _] => Err(ModelError::EmptyInput),
            [_, d] if d == self.config.input_dim => Ok(()),
            [_, d] => Err(ModelError::InputDim {
                expected: self.config.input_dim,
                found: d,
            }),
            _ => Err(ModelError::Shape(format!("features must be n × d, got {:?}", features.shape()))),
        }
    }

    /// `n × 5` label distributions for an `n × input_dim` feature matrix.
    pub fn scores_with<R: Rng + ?Sized>(&self, features: &Tensor, training: bool, rng: &mut R) -> Result<Tensor, ModelError> {
        self.check_features(features)?;
        let mut g = Graph::new();
        let f = network::build(&mut g, &self.config, &self.layout, self.params.tensors(), &[features], training, &mut [rng])?;
        Ok(g.value(f.probs).clone())
    }

    /// Inference-mode scores for several sentences in one pass; identical to
    /// calling [`Model::scores`] on each.
    pub fn scores_batch(&self, features: &[&Tensor]) -> Result<Vec<Tensor>, ModelError> {
        if features.is_empty() {
            return Ok(Vec::new());
        }
        for f in features {
            self.check_features(f)?;
        }
        let mut g = Graph::new();
        let mut rngs: Vec<_> = features.iter().map(|_| inert_rng()).collect();
        let f = network::build(&mut g, &self.config, &self.layout, self.params.tensors(), features, false, &mut rngs)?;
        let probs = g.value(f.probs);
        let mut out = Vec::with_capacity(features.len());
        let mut start = 0;
        for f in features {
            let n = f.shape()[0];
            out.push(Tensor::new(vec![n, 5], probs.data()[start * 5..(start + n) * 5].to_vec())?);
            start += n;
        }
        Ok(out)
    }

    /// Inference-mode scores.
    pub fn scores(&self, features: &Tensor) -> Result<Tensor, ModelError> {
        self.scores_with(features, false, &mut inert_rng())
    }

    pub fn forward<S: AsRef<str>, R: Rng + ?Sized>(
        &self,
        tokens: &[S],
        emb: &InputEmbedding,
        training: bool,
        rng: &mut R,
    ) -> Result<Tensor, ModelError> {
        if tokens.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        self.check_embedding(emb)?;
        self.scores_with(&emb.features(tokens), training, rng)
    }

    pub fn predict<S: AsRef<str>>(&self, tokens: &[S], emb: &InputEmbedding) -> Result<(Vec<Label>, Vec<EntitySpan>), ModelError> {
        if tokens.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        self.check_embedding(emb)?;
        self.predict_features(&emb.features(tokens))
    }

    pub fn predict_features(&self, features: &Tensor) -> Result<(Vec<Label>, Vec<EntitySpan>), ModelError> {
        Ok(decode_scores(&self.scores(features)?))
    }

    /// Inference-mode mean cross-entropy against gold label codes.
    pub fn loss(&self, features: &Tensor, gold: &[usize]) -> Result<f64, ModelError> {
        self.check_features(features)?;
        let mut g = Graph::new();
        let mut rng = inert_rng();
        let f = network::build(&mut g, &self.config, &self.layout, self.params.tensors(), &[features], false, &mut [&mut rng])?;
        let loss = g.cross_entropy(f.probs, gold)?;
        Ok(g.value(loss).item())
    }

    /// Mean cross-entropy and its gradient for every parameter tensor, in
    /// [`ModelParams::tensors`] order.
    pub fn loss_and_gradients<R: Rng + ?Sized>(
        &self,
        features: &Tensor,
        gold: &[usize],
        training: bool,
        rng: &mut R,
    ) -> Result<(f64, Vec<Tensor>), ModelError> {
        self.loss_and_gradients_batch(&[features], &[gold], training, &mut [rng])
    }

    /// Token-weighted mean cross-entropy over several sentences recorded on
    /// one graph, with its gradient. Sentence `s` uses `rngs[s]` for dropout.
    pub fn loss_and_gradients_batch<R: Rng>(
        &self,
        features: &[&Tensor],
        gold: &[&[usize]],
        training: bool,
        rngs: &mut [R],
    ) -> Result<(f64, Vec<Tensor>), ModelError> {
        if features.is_empty() || features.len() != gold.len() || features.len() != rngs.len() {
            return Err(ModelError::Shape(format!(
                "batch of {} feature matrices, {} label sequences, {} generators",
                features.len(),
                gold.len(),
                rngs.len()
            )));
        }
        for (f, labels) in features.iter().zip(gold) {
            self.check_features(f)?;
            if f.shape()[0] != labels.len() {
                return Err(ModelError::Shape(format!("{} feature rows but {} labels", f.shape()[0], labels.len())));
            }
        }
        let mut g = Graph::new();
        let f = network::build(&mut g, &self.config, &self.layout, self.params.tensors(), features, training, rngs)?;
        let all_gold: Vec<usize> = gold.concat();
        let loss = g.cross_entropy(f.probs, &all_gold)?;
        let value = g.value(loss).item();
        let mut grads = g.backward(loss)?;
        let out = f
            .params
            .iter()
            .zip(self.params.tensors())
            .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect();
        Ok((value, out))
    }

    /// Inference pass exposing encoder states and attention internals.
    pub fn trace(&self, features: &Tensor) -> Result<Trace, ModelError> {
        self.check_features(features)?;
        let mut g = Graph::new();
        let f = network::build(&mut g, &self.config, &self.layout, self.params.tensors(), &[features], false, &mut [inert_rng()])?;
        let layers = f
            .layers
            .iter()
            .map(|l| LayerTrace {
                r: [g.value(l.r[0]).clone(), g.value(l.r[1]).clone()],
                alpha: [g.value(l.alpha[0]).data().to_vec(), g.value(l.alpha[1]).data().to_vec()],
                prototypes: [g.value(l.u[0]).data().to_vec(), g.value(l.u[1]).data().to_vec()],
            })
            .collect();
        Ok(Trace {
            states: g.value(f.states).clone(),
            layers,
            scores: g.value(f.probs).clone(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut w = Writer::new(MAGIC, VERSION);
        w.u8(match c.architecture {
            Architecture::Cmla => 0,
            Architecture::Softmax => 1,
        });
        w.u8(c.rnn.code());
        w.u8(c.embedding_mode.code());
        for v in [c.hidden_units, c.attention_layers, c.tensor_dim, c.input_dim] {
            w.u64(v as u64);
        }
        w.f64(c.dropout);
        w.u64(c.seed);
        w.u64(self.embeddings.len() as u64);
        for e in &self.embeddings {
            w.str(&e.path);
            w.str(&e.fingerprint);
        }
        write_tensors(&mut w, self.params.names(), self.params.tensors());
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader::open(data, MAGIC, VERSION)?;
        let invalid = |m: &str| ModelError::Format(FormatError::Invalid(m.into()));
        let architecture = match r.u8()? {
            0 => Architecture::Cmla,
            1 => Architecture::Softmax,
            _ => return Err(invalid("unknown architecture code")),
        };
        let rnn = RnnVariant::from_code(r.u8()?).ok_or_else(|| invalid("unknown rnn code"))?;
        let embedding_mode = EmbeddingMode::from_code(r.u8()?).ok_or_else(|| invalid("unknown embedding mode"))?;
        let hidden_units = r.usize()?;
        let attention_layers = r.usize()?;
        let tensor_dim = r.usize()?;
        let input_dim = r.usize()?;
        let config = ModelConfig {
            architecture,
            rnn,
            hidden_units,
            attention_layers,
            tensor_dim,
            dropout: r.f64()?,
            embedding_mode,
            input_dim,
            seed: r.u64()?,
        };
        let n_emb = r.usize()?;
        let mut embeddings = Vec::new();
        for _ in 0..n_emb {
            embeddings.push(EmbeddingRef {
                path: r.str()?,
                fingerprint: r.str()?,
            });
        }
        let (names, tensors) = read_tensors(&mut r)?;
        r.finish()?;
        let params = ModelParams::from_tensors(&config, tensors)?;
        if params.names() != names.as_slice() {
            return Err(invalid("parameter names disagree with config"));
        }
        let mut model = Model::with_params(config, params)?;
        model.embeddings = embeddings;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| ModelError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let data = std::fs::read(path).map_err(|e| ModelError::io(path, e))?;
        Self::from_bytes(&data)
    }

    /// SHA-256 of the serialized model.
    pub fn fingerprint(&self) -> String {
        binio::sha256_hex(&self.to_bytes())
    }
}

pub fn write_tensors(w: &mut Writer, names: &[String], tensors: &[Tensor]) {
    w.u64(tensors.len() as u64);
    for (name, t) in names.iter().zip(tensors) {
        w.str(name);
        w.usizes(t.shape());
        w.f64s(t.data());
    }
}

pub fn read_tensors(r: &mut Reader<'_>) -> Result<(Vec<String>, Vec<Tensor>), FormatError> {
    let n = r.usize()?;
    let mut names = Vec::new();
    let mut tensors = Vec::new();
    for _ in 0..n {
        names.push(r.str()?);
        let shape = r.usizes()?;
        let data = r.f64s()?;
        tensors.push(Tensor::new(shape, data).map_err(|e| FormatError::Invalid(e.to_string()))?);
    }
    Ok((names, tensors))
}
