//! Mini-batch Nadam training with padding masks, early stopping on
//! validation loss, best-epoch restoration and resumable checkpoints.

mod checkpoint;
mod nadam;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use checkpoint::Checkpoint;
pub use nadam::{nadam_step, OptState};

use crate::binio::FormatError;
use crate::embed::InputEmbedding;
use crate::metrics::{entity_metrics, token_accuracy, token_metrics};
use crate::model::{argmax_labels, Model, ModelConfig, ModelError, ModelParams};
use crate::tensor::{Tensor, TensorError};
use crate::text::{Label, LabeledSentence};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{0} set is empty")]
    EmptySplit(&'static str),
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error("non-finite gradient in parameter tensor {tensor} at step {step}")]
    NonFiniteGradient { tensor: usize, step: u64 },
    #[error("checkpoint does not match: {0}")]
    CheckpointMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("checkpoint file: {0}")]
    Format(#[from] FormatError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl TrainError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        TrainError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Non-finite forward values surface as divergence of the current epoch.
    fn from_model(e: ModelError, epoch: usize) -> Self {
        match e {
            ModelError::Tensor(TensorError::NonFinite { .. }) => TrainError::Diverged { epoch },
            other => TrainError::Model(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 200,
            patience: 5,
            lr: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::Config(m.into()));
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be at least 1");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return fail("beta1 and beta2 must lie in (0, 1)");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return fail("lr must be positive");
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return fail("epsilon must be positive");
        }
        Ok(())
    }
}

/// A sentence's precomputed input features and gold label codes.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Tensor,
    pub gold: Vec<usize>,
}

impl Example {
    pub fn new(features: Tensor, gold: Vec<usize>) -> Result<Self, TrainError> {
        if features.rank() != 2 || features.shape()[0] != gold.len() {
            return Err(TrainError::Config(format!(
                "features {:?} do not match {} labels",
                features.shape(),
                gold.len()
            )));
        }
        if gold.is_empty() {
            return Err(TrainError::Model(ModelError::EmptyInput));
        }
        Ok(Example { features, gold })
    }

    pub fn from_sentence(sentence: &LabeledSentence, emb: &InputEmbedding) -> Self {
        Example {
            features: emb.features(sentence.tokens()),
            gold: sentence.tags().iter().map(|t| t.code()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }

    pub fn gold_labels(&self) -> Vec<Label> {
        self.gold.iter().map(|&c| Label::from_code(c).expect("valid code")).collect()
    }
}

pub fn examples(sentences: &[LabeledSentence], emb: &InputEmbedding) -> Vec<Example> {
    sentences.iter().map(|s| Example::from_sentence(s, emb)).collect()
}

/// A mini-batch padded to a common length. Padded positions carry zero
/// features, label code 0 and `mask = false`; they never reach the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Identifiers feeding each sentence's dropout stream.
    pub ids: Vec<usize>,
    /// `batch × len × dim`.
    pub features: Tensor,
    pub gold: Vec<Vec<usize>>,
    pub mask: Vec<Vec<bool>>,
}

impl Batch {
    /// Pads to the longest member, or to `len` when that is longer.
    pub fn pad(ids: &[usize], members: &[&Example], len: Option<usize>) -> Self {
        let max = members.iter().map(|e| e.len()).max().unwrap_or(0).max(len.unwrap_or(0));
        let dim = members.first().map_or(0, |e| e.features.shape()[1]);
        let mut data = vec![0.0; members.len() * max * dim];
        let mut gold = Vec::with_capacity(members.len());
        let mut mask = Vec::with_capacity(members.len());
        for (b, e) in members.iter().enumerate() {
            let n = e.len();
            data[b * max * dim..(b * max + n) * dim].copy_from_slice(e.features.data());
            let mut g = e.gold.clone();
            g.resize(max, 0);
            gold.push(g);
            let mut m = vec![true; n];
            m.resize(max, false);
            mask.push(m);
        }
        Batch {
            ids: ids.to_vec(),
            features: Tensor::new(vec![members.len(), max, dim], data).expect("sized above"),
            gold,
            mask,
        }
    }

    pub fn size(&self) -> usize {
        self.gold.len()
    }

    pub fn tokens(&self) -> usize {
        self.mask.iter().flatten().filter(|&&m| m).count()
    }

    /// Unpadded features and labels of member `b`.
    fn member(&self, b: usize) -> (Tensor, Vec<usize>) {
        let len = self.features.shape()[1];
        let dim = self.features.shape()[2];
        let base = &self.features.data()[b * len * dim..(b + 1) * len * dim];
        let mut rows = Vec::new();
        let mut gold = Vec::new();
        for (t, &m) in self.mask[b].iter().enumerate() {
            if m {
                rows.extend_from_slice(&base[t * dim..(t + 1) * dim]);
                gold.push(self.gold[b][t]);
            }
        }
        let n = gold.len();
        (Tensor::new(vec![n, dim], rows).expect("sized above"), gold)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream per (seed, epoch, item).
fn stream(seed: u64, epoch: usize, item: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(splitmix(seed) ^ epoch as u64) ^ item))
}

/// Token-weighted mean loss and gradient over the real tokens of a batch.
/// Only unpadded rows are extracted, and all members are recorded on a single
/// graph, so the result is `Σ_s (n_s/N)·∇loss_s` with each sentence drawing
/// dropout from its own `(seed, epoch, id)` stream.
pub fn batch_gradient(model: &Model, batch: &Batch, seed: u64, epoch: usize) -> Result<(f64, Vec<Tensor>), TrainError> {
    let mut features = Vec::new();
    let mut gold = Vec::new();
    let mut rngs = Vec::new();
    for b in 0..batch.size() {
        let (f, g) = batch.member(b);
        if g.is_empty() {
            continue;
        }
        features.push(f);
        gold.push(g);
        rngs.push(stream(seed, epoch, batch.ids[b] as u64));
    }
    if features.is_empty() {
        return Err(TrainError::EmptySplit("batch"));
    }
    let feature_refs: Vec<&Tensor> = features.iter().collect();
    let gold_refs: Vec<&[usize]> = gold.iter().map(Vec::as_slice).collect();
    model
        .loss_and_gradients_batch(&feature_refs, &gold_refs, true, &mut rngs)
        .map_err(|e| TrainError::from_model(e, epoch))
}

/// Sentences scored per inference graph.
const EVAL_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    /// Token-weighted mean cross-entropy.
    pub loss: f64,
    pub token_accuracy: f64,
    pub token_f1: f64,
    pub entity_f1: f64,
}

/// Inference-mode predictions for every example, in order.
pub fn predict_all(model: &Model, data: &[Example]) -> Result<Vec<Vec<Label>>, ModelError> {
    Ok(score_all(model, data)?.iter().map(argmax_labels).collect())
}

fn score_all(model: &Model, data: &[Example]) -> Result<Vec<Tensor>, ModelError> {
    let chunks: Vec<Result<Vec<Tensor>, ModelError>> = data
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| model.scores_batch(&chunk.iter().map(|e| &e.features).collect::<Vec<_>>()))
        .collect();
    let mut out = Vec::with_capacity(data.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

pub fn evaluate(model: &Model, data: &[Example]) -> Result<Evaluation, ModelError> {
    let scores = score_all(model, data)?;
    let mut loss = 0.0;
    let mut preds = Vec::with_capacity(data.len());
    for (e, s) in data.iter().zip(&scores) {
        for (r, &g) in e.gold.iter().enumerate() {
            loss -= s.row(r)[g].max(crate::tensor::LOG_CLAMP).ln();
        }
        preds.push(argmax_labels(s));
    }
    let gold: Vec<Vec<Label>> = data.iter().map(Example::gold_labels).collect();
    let tokens: usize = data.iter().map(Example::len).sum();
    let aligned = "predictions follow gold lengths";
    Ok(Evaluation {
        loss: loss / tokens.max(1) as f64,
        token_accuracy: token_accuracy(&gold, &preds).expect(aligned),
        token_f1: token_metrics(&gold, &preds).expect(aligned).macro_f1,
        entity_f1: entity_metrics(&gold, &preds).expect(aligned).macro_f1,
    })
}

/// Validation-loss early stopping. The first epoch always improves; an
/// epoch that fails to improve stops training once `patience` such epochs
/// have accumulated in a row.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best_loss: f64,
    /// 1-based; 0 before any epoch.
    pub best_epoch: usize,
    pub wait: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Improved,
    Continue,
    Stop,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Improved => "improved",
            Decision::Continue => "continue",
            Decision::Stop => "stop",
        }
    }
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            wait: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> Decision {
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_epoch = epoch;
            self.wait = 0;
            Decision::Improved
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                Decision::Stop
            } else {
                Decision::Continue
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EarlyStopping,
    MaxEpochs,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::EarlyStopping => "early_stopping",
            StopReason::MaxEpochs => "max_epochs",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub validation: Evaluation,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_token_f1: Vec<f64>,
    pub val_token_accuracy: Vec<f64>,
    pub val_entity_f1: Vec<f64>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub stop_reason: Option<StopReason>,
    pub steps: u64,
}

impl FitReport {
    fn empty() -> Self {
        FitReport {
            train_loss: Vec::new(),
            val_loss: Vec::new(),
            val_token_f1: Vec::new(),
            val_token_accuracy: Vec::new(),
            val_entity_f1: Vec::new(),
            best_epoch: 0,
            stop_reason: None,
            steps: 0,
        }
    }

    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }

    fn push(&mut self, train_loss: f64, v: &Evaluation) {
        self.train_loss.push(train_loss);
        self.val_loss.push(v.loss);
        self.val_token_f1.push(v.token_f1);
        self.val_token_accuracy.push(v.token_accuracy);
        self.val_entity_f1.push(v.entity_f1);
    }
}

/// Resumable state of a fit in progress.
pub struct Trainer<'a> {
    model: Model,
    config: TrainConfig,
    opt: OptState,
    stopping: EarlyStopping,
    best: ModelParams,
    report: FitReport,
    train: &'a [Example],
    val: &'a [Example],
}

impl<'a> Trainer<'a> {
    pub fn new(model: Model, config: TrainConfig, train: &'a [Example], val: &'a [Example]) -> Result<Self, TrainError> {
        config.validate()?;
        Self::check_splits(&model, train, val)?;
        Ok(Trainer {
            opt: OptState::new(model.params().tensors()),
            stopping: EarlyStopping::new(config.patience),
            best: model.params().clone(),
            report: FitReport::empty(),
            model,
            config,
            train,
            val,
        })
    }

    fn check_splits(model: &Model, train: &[Example], val: &[Example]) -> Result<(), TrainError> {
        if train.is_empty() {
            return Err(TrainError::EmptySplit("training"));
        }
        if val.is_empty() {
            return Err(TrainError::EmptySplit("validation"));
        }
        let dim = model.config().input_dim;
        for e in train.iter().chain(val) {
            if e.features.shape().get(1) != Some(&dim) {
                return Err(ModelError::InputDim {
                    expected: dim,
                    found: e.features.shape().get(1).copied().unwrap_or(0),
                }
                .into());
            }
        }
        Ok(())
    }

    /// Continues from a checkpoint; its configs must equal the supplied ones.
    pub fn resume(
        checkpoint: Checkpoint,
        model_config: &ModelConfig,
        config: &TrainConfig,
        train: &'a [Example],
        val: &'a [Example],
    ) -> Result<Self, TrainError> {
        if checkpoint.model.config() != model_config {
            return Err(TrainError::CheckpointMismatch(format!(
                "model config {:?} differs from checkpoint's {:?}",
                model_config,
                checkpoint.model.config()
            )));
        }
        if &checkpoint.train_config != config {
            return Err(TrainError::CheckpointMismatch("training config differs from checkpoint's".into()));
        }
        Self::check_splits(&checkpoint.model, train, val)?;
        Ok(Trainer {
            model: checkpoint.model,
            config: checkpoint.train_config,
            opt: checkpoint.opt,
            stopping: checkpoint.stopping,
            best: checkpoint.best,
            report: checkpoint.report,
            train,
            val,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn report(&self) -> &FitReport {
        &self.report
    }

    pub fn epochs_done(&self) -> usize {
        self.report.epochs_run()
    }

    pub fn is_done(&self) -> bool {
        self.report.stop_reason.is_some()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            train_config: self.config.clone(),
            opt: self.opt.clone(),
            stopping: self.stopping.clone(),
            best: self.best.clone(),
            report: self.report.clone(),
        }
    }

    /// One pass over the shuffled training set followed by validation.
    pub fn run_epoch(&mut self) -> Result<EpochStats, TrainError> {
        if self.is_done() {
            return Err(TrainError::Config("training already finished".into()));
        }
        let epoch = self.epochs_done() + 1;
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut stream(self.config.seed, epoch, u64::MAX));

        let mut loss_sum = 0.0;
        let mut tokens = 0usize;
        for ids in order.chunks(self.config.batch_size) {
            let members: Vec<&Example> = ids.iter().map(|&i| &self.train[i]).collect();
            let batch = Batch::pad(ids, &members, None);
            let (loss, grads) = batch_gradient(&self.model, &batch, self.config.seed, epoch)?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            loss_sum += loss * batch.tokens() as f64;
            tokens += batch.tokens();
            nadam_step(self.model.params_mut().tensors_mut(), &grads, &mut self.opt, &self.config)?;
            self.report.steps += 1;
        }
        let train_loss = loss_sum / tokens as f64;
        let validation = evaluate(&self.model, self.val).map_err(|e| TrainError::from_model(e, epoch))?;
        if !validation.loss.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        self.report.push(train_loss, &validation);
        let decision = self.stopping.observe(epoch, validation.loss);
        if decision == Decision::Improved {
            self.best = self.model.params().clone();
            self.report.best_epoch = epoch;
        }
        if decision == Decision::Stop {
            self.report.stop_reason = Some(StopReason::EarlyStopping);
        } else if epoch >= self.config.max_epochs {
            self.report.stop_reason = Some(StopReason::MaxEpochs);
        }
        Ok(EpochStats {
            epoch,
            train_loss,
            validation,
            decision,
        })
    }

    /// Runs to completion; `on_epoch` sees each epoch's statistics.
    pub fn run(mut self, mut on_epoch: impl FnMut(&EpochStats, &Trainer<'_>)) -> Result<(Model, FitReport), TrainError> {
        while !self.is_done() {
            let stats = self.run_epoch()?;
            on_epoch(&stats, &self);
        }
        Ok(self.finish())
    }

    /// The best-validation parameters and the run's report.
    pub fn finish(self) -> (Model, FitReport) {
        let mut model = self.model;
        model.set_params(self.best).expect("best parameters share the model's shapes");
        (model, self.report)
    }
}

/// Trains a freshly initialized model and returns its best-validation weights.
pub fn fit(
    model_config: &ModelConfig,
    config: &TrainConfig,
    train: &[Example],
    val: &[Example],
) -> Result<(Model, FitReport), TrainError> {
    let model = Model::new(model_config.clone())?;
    Trainer::new(model, config.clone(), train, val)?.run(|_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patience_zero_stops_after_second_epoch() {
        let mut es = EarlyStopping::new(0);
        assert_eq!(es.observe(1, 1.0), Decision::Improved);
        assert_eq!(es.observe(2, 1.5), Decision::Stop);
    }

    #[test]
    fn patience_counts_consecutive_failures() {
        let mut es = EarlyStopping::new(2);
        assert_eq!(es.observe(1, 1.0), Decision::Improved);
        assert_eq!(es.observe(2, 1.0), Decision::Continue);
        assert_eq!(es.observe(3, 0.9), Decision::Improved);
        assert_eq!(es.observe(4, 0.95), Decision::Continue);
        assert_eq!(es.observe(5, 0.92), Decision::Stop);
        assert_eq!(es.best_epoch, 3);
    }

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.batch_size, c.max_epochs, c.patience), (32, 200, 5));
        assert_eq!((c.lr, c.beta1, c.beta2, c.epsilon), (0.002, 0.9, 0.999, 1e-8));
        assert!(TrainConfig { batch_size: 0, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { beta1: 1.0, ..c }.validate().is_err());
    }

    #[test]
    fn padding_layout() {
        let a = Example::new(Tensor::filled(&[2, 3], 1.0), vec![0, 4]).unwrap();
        let b = Example::new(Tensor::filled(&[1, 3], 2.0), vec![2]).unwrap();
        let batch = Batch::pad(&[0, 1], &[&a, &b], Some(4));
        assert_eq!(batch.features.shape(), &[2, 4, 3]);
        assert_eq!(batch.tokens(), 3);
        assert_eq!(batch.mask[1], vec![true, false, false, false]);
        let (f, g) = batch.member(1);
        assert_eq!((f, g), (Tensor::filled(&[1, 3], 2.0), vec![2]));
    }
}
