use std::path::Path;

use super::{EarlyStopping, FitReport, OptState, StopReason, TrainConfig, TrainError};
use crate::binio::{FormatError, Reader, Writer};
use crate::model::{read_tensors, write_tensors, Model, ModelParams};

const MAGIC: &[u8; 8] = b"AOTE-CKP";
const VERSION: u32 = 1;

/// Everything needed to continue a fit bit-for-bit: current and best
/// parameters, optimizer moments, early-stopping state and history.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub train_config: TrainConfig,
    pub opt: OptState,
    pub stopping: EarlyStopping,
    pub best: ModelParams,
    pub report: FitReport,
}

impl Checkpoint {
    pub fn epoch(&self) -> usize {
        self.report.epochs_run()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        let c = &self.train_config;
        for v in [c.batch_size, c.max_epochs, c.patience] {
            w.u64(v as u64);
        }
        for v in [c.lr, c.beta1, c.beta2, c.epsilon] {
            w.f64(v);
        }
        w.u64(c.seed);
        w.bytes(&self.model.to_bytes());
        let names = self.model.params().names();
        write_tensors(&mut w, names, self.best.tensors());
        w.u64(self.opt.t);
        write_tensors(&mut w, names, &self.opt.m);
        write_tensors(&mut w, names, &self.opt.v);
        w.u64(self.stopping.patience as u64);
        w.f64(self.stopping.best_loss);
        w.u64(self.stopping.best_epoch as u64);
        w.u64(self.stopping.wait as u64);
        let r = &self.report;
        for series in [&r.train_loss, &r.val_loss, &r.val_token_f1, &r.val_token_accuracy, &r.val_entity_f1] {
            w.f64s(series);
        }
        w.u64(r.best_epoch as u64);
        w.u8(match r.stop_reason {
            None => 0,
            Some(StopReason::EarlyStopping) => 1,
            Some(StopReason::MaxEpochs) => 2,
        });
        w.u64(r.steps);
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, TrainError> {
        let mut r = Reader::open(data, MAGIC, VERSION)?;
        let batch_size = r.usize()?;
        let max_epochs = r.usize()?;
        let patience = r.usize()?;
        let train_config = TrainConfig {
            batch_size,
            max_epochs,
            patience,
            lr: r.f64()?,
            beta1: r.f64()?,
            beta2: r.f64()?,
            epsilon: r.f64()?,
            seed: r.u64()?,
        };
        let model = Model::from_bytes(&r.bytes()?)?;
        let cfg = model.config().clone();
        let (_, best) = read_tensors(&mut r)?;
        let best = ModelParams::from_tensors(&cfg, best)?;
        let t = r.u64()?;
        let (_, m) = read_tensors(&mut r)?;
        let (_, v) = read_tensors(&mut r)?;
        let opt = OptState { m, v, t };
        if !opt.matches(model.params().tensors()) {
            return Err(FormatError::Invalid("optimizer moments do not match parameters".into()).into());
        }
        let stopping = EarlyStopping {
            patience: r.usize()?,
            best_loss: r.f64()?,
            best_epoch: r.usize()?,
            wait: r.usize()?,
        };
        let mut series = Vec::with_capacity(5);
        for _ in 0..5 {
            series.push(r.f64s()?);
        }
        let [train_loss, val_loss, val_token_f1, val_token_accuracy, val_entity_f1]: [Vec<f64>; 5] =
            series.try_into().expect("five series");
        let best_epoch = r.usize()?;
        let stop_reason = match r.u8()? {
            0 => None,
            1 => Some(StopReason::EarlyStopping),
            2 => Some(StopReason::MaxEpochs),
            _ => return Err(FormatError::Invalid("unknown stop reason".into()).into()),
        };
        let steps = r.u64()?;
        r.finish()?;
        Ok(Checkpoint {
            model,
            train_config,
            opt,
            stopping,
            best,
            report: FitReport {
                train_loss,
                val_loss,
                val_token_f1,
                val_token_accuracy,
                val_entity_f1,
                best_epoch,
                stop_reason,
                steps,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| TrainError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let data = std::fs::read(path).map_err(|e| TrainError::io(path, e))?;
        Self::from_bytes(&data)
    }
}
