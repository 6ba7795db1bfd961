//! The four experiment scenarios and the grid runner behind them.
//!
//! * P1 — encoder variant (GRU, LSTM, B-GRU, B-LSTM) with double embeddings.
//! * P2 — embedding mode (double, general, domain, hybrid) with P1's winner.
//! * P3 — hidden units × attention layers × K × dropout with P2's winner.
//! * P4 — the best full model against the encoder + softmax ablation.
//!
//! Each cell trains from scratch with the spec's training settings and is
//! scored on the validation split. Cells are ranked by entity macro-F1, then
//! token macro-F1, then configuration order.

use std::cmp::Ordering;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::config::{model_section, train_section, Config, ConfigError};
use crate::embed::{DoubleEmbedding, EmbeddingError, EmbeddingMode, EmbeddingTable, InputEmbedding};
use crate::metrics::{entity_metrics, token_metrics, MetricsReport};
use crate::model::{Architecture, EmbeddingRef, Model, ModelConfig, RnnVariant};
use crate::text::{read_corpus, LabeledSentence, TextError};
use crate::trainer::{examples, predict_all, StopReason, TrainConfig, TrainError, Trainer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    P1,
    P2,
    P3,
    P4,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::P1, Scenario::P2, Scenario::P3, Scenario::P4];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::P1 => "P1",
            Scenario::P2 => "P2",
            Scenario::P3 => "P3",
            Scenario::P4 => "P4",
        }
    }

    pub fn next(self) -> Option<Scenario> {
        match self {
            Scenario::P1 => Some(Scenario::P2),
            Scenario::P2 => Some(Scenario::P3),
            Scenario::P3 => Some(Scenario::P4),
            Scenario::P4 => None,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "P1" => Ok(Scenario::P1),
            "P2" => Ok(Scenario::P2),
            "P3" => Ok(Scenario::P3),
            "P4" => Ok(Scenario::P4),
            _ => Err(format!("unknown scenario `{s}` (expected P1, P2, P3 or P4)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> ExperimentError {
    ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Value lists for every sweepable axis; a scenario reads only its own.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub rnn: Vec<RnnVariant>,
    pub embedding: Vec<EmbeddingMode>,
    pub hidden: Vec<usize>,
    pub layers: Vec<usize>,
    pub k: Vec<usize>,
    pub dropout: Vec<f64>,
    pub architecture: Vec<Architecture>,
}

impl Default for Sweep {
    /// The 3 × 3 × 3 × 3 = 81-point P3 grid and the full P1/P2/P4 lists.
    fn default() -> Self {
        Sweep {
            rnn: RnnVariant::ALL.to_vec(),
            embedding: EmbeddingMode::ALL.to_vec(),
            hidden: vec![50, 75, 100],
            layers: vec![1, 2, 3],
            k: vec![10, 15, 20],
            dropout: vec![0.2, 0.35, 0.5],
            architecture: vec![Architecture::Cmla, Architecture::Softmax],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataPaths {
    pub train: PathBuf,
    pub val: PathBuf,
    pub general: Option<PathBuf>,
    pub domain: Option<PathBuf>,
    pub hybrid: Option<PathBuf>,
    /// Output directory of the previous scenario, whose recorded winner seeds this one.
    pub previous: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    /// Fixed settings; the swept axis and anything inherited from the previous winner override them.
    pub base: ModelConfig,
    pub train: TrainConfig,
    pub sweep: Sweep,
    pub data: DataPaths,
    pub out: PathBuf,
    pub seed: u64,
}

impl ExperimentSpec {
    /// Reads `[experiment]`, `[data]`, `[model]`, `[train]` and `[sweep]`.
    /// `seed` applies to both model initialization and training.
    pub fn from_config(config: &Config) -> Result<Self, ExperimentError> {
        let scenario: Scenario = config
            .value("experiment", "scenario")?
            .ok_or_else(|| ConfigError::Missing {
                section: "experiment".into(),
                key: "scenario".into(),
            })?;
        let seed = config.value("experiment", "seed")?.unwrap_or(0);
        let out = PathBuf::from(config.require("experiment", "out")?);
        let base = config.model(ModelConfig { seed, ..ModelConfig::best() })?;
        let train = config.train(TrainConfig {
            seed,
            ..TrainConfig::default()
        })?;
        let defaults = Sweep::default();
        let sweep = Sweep {
            rnn: config.list("sweep", "rnn")?.unwrap_or(defaults.rnn),
            embedding: config.list("sweep", "embedding")?.unwrap_or(defaults.embedding),
            hidden: config.list("sweep", "hidden")?.unwrap_or(defaults.hidden),
            layers: config.list("sweep", "layers")?.unwrap_or(defaults.layers),
            k: config.list("sweep", "k")?.unwrap_or(defaults.k),
            dropout: config.list("sweep", "dropout")?.unwrap_or(defaults.dropout),
            architecture: config.list("sweep", "architecture")?.unwrap_or(defaults.architecture),
        };
        let path = |key: &str| config.get("data", key).map(PathBuf::from);
        let data = DataPaths {
            train: PathBuf::from(config.require("data", "train")?),
            val: PathBuf::from(config.require("data", "val")?),
            general: path("general"),
            domain: path("domain"),
            hybrid: path("hybrid"),
            previous: path("previous"),
        };
        let spec = ExperimentSpec {
            scenario,
            base,
            train,
            sweep,
            data,
            out,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let s = &self.sweep;
        let empty = match self.scenario {
            Scenario::P1 => s.rnn.is_empty(),
            Scenario::P2 => s.embedding.is_empty(),
            Scenario::P3 => s.hidden.is_empty() || s.layers.is_empty() || s.k.is_empty() || s.dropout.is_empty(),
            Scenario::P4 => false,
        };
        if empty {
            return Err(ExperimentError::Invalid(format!("{} needs a non-empty sweep", self.scenario)));
        }
        if self.scenario == Scenario::P4 {
            let mut a = s.architecture.clone();
            a.sort_by_key(|x| x.as_str());
            a.dedup();
            if a.len() != 2 || s.architecture.len() != 2 {
                return Err(ExperimentError::Invalid("P4 compares exactly cmla and softmax".into()));
            }
        }
        self.train.validate().map_err(|e| ExperimentError::Invalid(e.to_string()))
    }

    /// Base configuration after inheriting the previous scenario's winner.
    pub fn resolved_base(&self, previous: Option<&ModelConfig>) -> ModelConfig {
        let mut c = self.base.clone();
        if let Some(w) = previous {
            match self.scenario {
                Scenario::P1 => {}
                Scenario::P2 => c.rnn = w.rnn,
                Scenario::P3 => {
                    c.rnn = w.rnn;
                    c.embedding_mode = w.embedding_mode;
                }
                Scenario::P4 => {
                    c = ModelConfig {
                        seed: c.seed,
                        input_dim: c.input_dim,
                        ..w.clone()
                    }
                }
            }
        }
        c
    }

    /// Every configuration of the sweep, in serialization order.
    pub fn cells(&self, base: &ModelConfig) -> Vec<ModelConfig> {
        let s = &self.sweep;
        match self.scenario {
            Scenario::P1 => s
                .rnn
                .iter()
                .map(|&rnn| ModelConfig {
                    rnn,
                    embedding_mode: EmbeddingMode::Double,
                    ..base.clone()
                })
                .collect(),
            Scenario::P2 => s
                .embedding
                .iter()
                .map(|&embedding_mode| ModelConfig {
                    embedding_mode,
                    ..base.clone()
                })
                .collect(),
            Scenario::P3 => {
                let mut out = Vec::new();
                for &hidden_units in &s.hidden {
                    for &attention_layers in &s.layers {
                        for &tensor_dim in &s.k {
                            for &dropout in &s.dropout {
                                out.push(ModelConfig {
                                    hidden_units,
                                    attention_layers,
                                    tensor_dim,
                                    dropout,
                                    ..base.clone()
                                });
                            }
                        }
                    }
                }
                out
            }
            Scenario::P4 => s
                .architecture
                .iter()
                .map(|&architecture| ModelConfig {
                    architecture,
                    ..base.clone()
                })
                .collect(),
        }
    }

    fn to_ini(&self, base: &ModelConfig) -> String {
        let join = |v: Vec<String>| v.join(", ");
        let s = &self.sweep;
        let mut out = format!(
            "[experiment]\nscenario = {}\nseed = {}\nout = {}\n\n[data]\ntrain = {}\nval = {}\n",
            self.scenario,
            self.seed,
            self.out.display(),
            self.data.train.display(),
            self.data.val.display()
        );
        for (key, p) in [
            ("general", &self.data.general),
            ("domain", &self.data.domain),
            ("hybrid", &self.data.hybrid),
            ("previous", &self.data.previous),
        ] {
            if let Some(p) = p {
                out.push_str(&format!("{key} = {}\n", p.display()));
            }
        }
        out.push('\n');
        out.push_str(&model_section(base));
        out.push('\n');
        out.push_str(&train_section(&self.train));
        out.push_str(&format!(
            "\n[sweep]\nrnn = {}\nembedding = {}\nhidden = {}\nlayers = {}\nk = {}\ndropout = {}\narchitecture = {}\n",
            join(s.rnn.iter().map(|v| v.to_string()).collect()),
            join(s.embedding.iter().map(|v| v.to_string()).collect()),
            join(s.hidden.iter().map(|v| v.to_string()).collect()),
            join(s.layers.iter().map(|v| v.to_string()).collect()),
            join(s.k.iter().map(|v| v.to_string()).collect()),
            join(s.dropout.iter().map(|v| v.to_string()).collect()),
            join(s.architecture.iter().map(|v| v.to_string()).collect()),
        ));
        out
    }
}

/// Compact, stable description of a configuration.
pub fn config_label(c: &ModelConfig) -> String {
    format!(
        "arch={} rnn={} emb={} hidden={} layers={} k={} dropout={}",
        c.architecture, c.rnn, c.embedding_mode, c.hidden_units, c.attention_layers, c.tensor_dim, c.dropout
    )
}

/// The embedding tables available to an experiment.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingSet {
    pub general: Option<(PathBuf, EmbeddingTable)>,
    pub domain: Option<(PathBuf, EmbeddingTable)>,
    pub hybrid: Option<(PathBuf, EmbeddingTable)>,
}

impl EmbeddingSet {
    pub fn load(data: &DataPaths) -> Result<Self, ExperimentError> {
        let load = |p: &Option<PathBuf>| -> Result<Option<(PathBuf, EmbeddingTable)>, ExperimentError> {
            p.as_ref().map(|p| Ok((p.clone(), EmbeddingTable::load(p)?))).transpose()
        };
        Ok(EmbeddingSet {
            general: load(&data.general)?,
            domain: load(&data.domain)?,
            hybrid: load(&data.hybrid)?,
        })
    }

    /// Input embedding for `mode` plus the references recorded in trained models.
    pub fn input(&self, mode: EmbeddingMode) -> Result<(InputEmbedding, Vec<EmbeddingRef>), ExperimentError> {
        let need = |slot: &Option<(PathBuf, EmbeddingTable)>, name: &str| {
            slot.clone()
                .ok_or_else(|| ExperimentError::MissingInput(format!("{mode} embeddings need the {name} table")))
        };
        let reference = |p: &Path, t: &EmbeddingTable| EmbeddingRef {
            path: p.display().to_string(),
            fingerprint: t.fingerprint(),
        };
        Ok(match mode {
            EmbeddingMode::Double => {
                let (gp, g) = need(&self.general, "general")?;
                let (dp, d) = need(&self.domain, "domain")?;
                let refs = vec![reference(&gp, &g), reference(&dp, &d)];
                (InputEmbedding::Double(DoubleEmbedding::new(g, d)), refs)
            }
            single => {
                let slot = match single {
                    EmbeddingMode::General => &self.general,
                    EmbeddingMode::Domain => &self.domain,
                    _ => &self.hybrid,
                };
                let (p, t) = need(slot, single.as_str())?;
                let refs = vec![reference(&p, &t)];
                (InputEmbedding::single(single, t)?, refs)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellMetrics {
    pub token: MetricsReport,
    pub entity: MetricsReport,
    pub best_epoch: usize,
    pub epochs: usize,
    pub stop_reason: Option<StopReason>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub index: usize,
    pub config: ModelConfig,
    /// Validation metrics, or the reason the cell failed.
    pub outcome: Result<CellMetrics, String>,
}

impl CellResult {
    pub fn label(&self) -> String {
        config_label(&self.config)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub scenario: Scenario,
    /// In configuration order.
    pub cells: Vec<CellResult>,
    /// Cell indices, best first; failed cells last.
    pub ranking: Vec<usize>,
}

/// Ranking comparator: entity macro-F1 desc, token macro-F1 desc, index asc.
fn compare(a: &CellResult, b: &CellResult) -> Ordering {
    match (&a.outcome, &b.outcome) {
        (Ok(x), Ok(y)) => y
            .entity
            .macro_f1
            .total_cmp(&x.entity.macro_f1)
            .then(y.token.macro_f1.total_cmp(&x.token.macro_f1))
            .then(a.index.cmp(&b.index)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.index.cmp(&b.index),
    }
}

impl GridResult {
    pub fn new(scenario: Scenario, cells: Vec<CellResult>) -> Self {
        let mut ranking: Vec<usize> = (0..cells.len()).collect();
        ranking.sort_by(|&a, &b| compare(&cells[a], &cells[b]));
        GridResult {
            scenario,
            cells,
            ranking,
        }
    }

    /// Best successful cell.
    pub fn winner(&self) -> Option<&CellResult> {
        self.ranking.first().map(|&i| &self.cells[i]).filter(|c| c.outcome.is_ok())
    }

    /// Tab-separated table in configuration order with a rank column.
    pub fn to_tsv(&self) -> String {
        let mut rank = vec![0; self.cells.len()];
        for (r, &i) in self.ranking.iter().enumerate() {
            rank[i] = r + 1;
        }
        let mut out = String::from(
            "cell\trank\tconfig\tstatus\ttoken_p\ttoken_r\ttoken_f1\tentity_p\tentity_r\tentity_f1\tbest_epoch\tepochs\n",
        );
        for c in &self.cells {
            match &c.outcome {
                Ok(m) => out.push_str(&format!(
                    "{}\t{}\t{}\tok\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}\n",
                    c.index,
                    rank[c.index],
                    c.label(),
                    m.token.macro_precision,
                    m.token.macro_recall,
                    m.token.macro_f1,
                    m.entity.macro_precision,
                    m.entity.macro_recall,
                    m.entity.macro_f1,
                    m.best_epoch,
                    m.epochs
                )),
                Err(e) => out.push_str(&format!(
                    "{}\t{}\t{}\tfailed: {}\t\t\t\t\t\t\t\t\n",
                    c.index,
                    rank[c.index],
                    c.label(),
                    e.replace(['\t', '\n'], " ")
                )),
            }
        }
        out
    }

    pub fn ranking_text(&self) -> String {
        let mut out = String::new();
        for (r, &i) in self.ranking.iter().enumerate() {
            let c = &self.cells[i];
            match &c.outcome {
                Ok(m) => out.push_str(&format!(
                    "{}. cell {} entity_f1={:.4} token_f1={:.4} {}\n",
                    r + 1,
                    i,
                    m.entity.macro_f1,
                    m.token.macro_f1,
                    c.label()
                )),
                Err(e) => out.push_str(&format!("{}. cell {} failed ({e}) {}\n", r + 1, i, c.label())),
            }
        }
        out
    }
}

/// Trains one configuration and scores it on the validation split. The
/// trained model is returned alongside its metrics.
pub fn run_cell(
    config: &ModelConfig,
    train_config: &TrainConfig,
    embeddings: &EmbeddingSet,
    train: &[LabeledSentence],
    val: &[LabeledSentence],
) -> Result<(Model, CellMetrics), String> {
    let (emb, refs) = embeddings.input(config.embedding_mode).map_err(|e| e.to_string())?;
    let config = ModelConfig {
        input_dim: emb.dim(),
        ..config.clone()
    };
    let train_ex = examples(train, &emb);
    let val_ex = examples(val, &emb);
    let model = Model::new(config).map_err(|e| e.to_string())?;
    let trainer = Trainer::new(model, train_config.clone(), &train_ex, &val_ex).map_err(|e: TrainError| e.to_string())?;
    let (mut model, report) = trainer.run(|_, _| {}).map_err(|e| e.to_string())?;
    model.set_embeddings(refs);
    let preds = predict_all(&model, &val_ex).map_err(|e| e.to_string())?;
    let gold: Vec<_> = val.iter().map(|s| s.tags().to_vec()).collect();
    let metrics = CellMetrics {
        token: token_metrics(&gold, &preds).map_err(|e| e.to_string())?,
        entity: entity_metrics(&gold, &preds).map_err(|e| e.to_string())?,
        best_epoch: report.best_epoch,
        epochs: report.epochs_run(),
        stop_reason: report.stop_reason,
    };
    Ok((model, metrics))
}

/// The winning configuration recorded in a scenario's output directory.
pub fn read_winner(dir: &Path) -> Result<ModelConfig, ExperimentError> {
    let path = dir.join("winner.ini");
    if !path.exists() {
        return Err(ExperimentError::MissingInput(format!("no recorded winner at {}", path.display())));
    }
    Ok(Config::load(&path)?.model(ModelConfig::best())?)
}

/// Runs one scenario and writes its artifacts under `spec.out`:
/// `spec.ini`, `results.tsv`, `ranking.txt`, `winner.ini`, `best_model.bin`
/// and `cells/<index>/{metrics.txt,model.bin}`.
///
/// `previous` is the preceding scenario's winner; when absent it is read
/// from `data.previous` if that is set.
pub fn run_scenario(spec: &ExperimentSpec, previous: Option<&ModelConfig>) -> Result<GridResult, ExperimentError> {
    spec.validate()?;
    let recorded = match (previous, &spec.data.previous) {
        (Some(_), _) | (None, None) => None,
        (None, Some(dir)) => Some(read_winner(dir)?),
    };
    let previous = previous.or(recorded.as_ref());
    for p in [&spec.data.train, &spec.data.val] {
        if !p.exists() {
            return Err(ExperimentError::MissingInput(p.display().to_string()));
        }
    }
    let train = read_corpus(&spec.data.train)?;
    let val = read_corpus(&spec.data.val)?;
    let embeddings = EmbeddingSet::load(&spec.data)?;
    let base = spec.resolved_base(previous);
    let configs = spec.cells(&base);

    let cells_dir = spec.out.join("cells");
    std::fs::create_dir_all(&cells_dir).map_err(|e| io_err(&cells_dir, e))?;
    std::fs::write(spec.out.join("spec.ini"), spec.to_ini(&base)).map_err(|e| io_err(&spec.out, e))?;

    let cells: Vec<Result<CellResult, ExperimentError>> = configs
        .par_iter()
        .enumerate()
        .map(|(index, config)| {
            let dir = cells_dir.join(format!("{index:03}"));
            std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
            let outcome = run_cell(config, &spec.train, &embeddings, &train, &val);
            let text = match &outcome {
                Ok((model, m)) => {
                    model.save(&dir.join("model.bin")).map_err(|e| ExperimentError::Invalid(e.to_string()))?;
                    format!(
                        "{}\n{}\n\n{}\n{}{}",
                        config_label(config),
                        m.token.format_table(),
                        m.entity.format_table(),
                        m.token.to_key_values(),
                        m.entity.to_key_values()
                    )
                }
                Err(e) => format!("{}\nfailed: {e}\n", config_label(config)),
            };
            std::fs::write(dir.join("metrics.txt"), text).map_err(|e| io_err(&dir, e))?;
            Ok(CellResult {
                index,
                config: config.clone(),
                outcome: outcome.map(|(_, m)| m),
            })
        })
        .collect();
    let cells = cells.into_iter().collect::<Result<Vec<_>, _>>()?;
    let result = GridResult::new(spec.scenario, cells);

    let write = |name: &str, text: String| {
        let p = spec.out.join(name);
        std::fs::write(&p, text).map_err(|e| io_err(&p, e))
    };
    write("results.tsv", result.to_tsv())?;
    write("ranking.txt", result.ranking_text())?;
    if let Some(w) = result.winner() {
        write("winner.ini", model_section(&w.config))?;
        let src = cells_dir.join(format!("{:03}", w.index)).join("model.bin");
        let dst = spec.out.join("best_model.bin");
        std::fs::copy(&src, &dst).map_err(|e| io_err(&dst, e))?;
    }
    Ok(result)
}

/// Runs `spec.scenario` and every later scenario, each into
/// `spec.out/<scenario>`, feeding each winner into the next.
pub fn run_chain(spec: &ExperimentSpec) -> Result<Vec<GridResult>, ExperimentError> {
    let mut results = Vec::new();
    let mut previous: Option<ModelConfig> = None;
    let mut scenario = Some(spec.scenario);
    while let Some(s) = scenario {
        let step = ExperimentSpec {
            scenario: s,
            out: spec.out.join(s.as_str()),
            data: DataPaths {
                previous: if previous.is_some() { None } else { spec.data.previous.clone() },
                ..spec.data.clone()
            },
            ..spec.clone()
        };
        let result = run_scenario(&step, previous.as_ref())?;
        previous = Some(
            result
                .winner()
                .ok_or_else(|| ExperimentError::Invalid(format!("{s}: every cell failed")))?
                .config
                .clone(),
        );
        results.push(result);
        scenario = s.next();
    }
    Ok(results)
}
