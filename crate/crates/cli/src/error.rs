use std::fmt;

use aote_core::config::ConfigError;
use aote_core::embed::EmbeddingError;
use aote_core::experiment::ExperimentError;
use aote_core::metrics::MetricsError;
use aote_core::model::ModelError;
use aote_core::synth::SynthError;
use aote_core::tensor::TensorError;
use aote_core::text::TextError;
use aote_core::trainer::TrainError;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Other,
    Usage,
    Io,
    Format,
    Numeric,
    Config,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Other => 1,
            Kind::Usage => 2,
            Kind::Io => 3,
            Kind::Format => 4,
            Kind::Numeric => 5,
            Kind::Config => 6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Other => "other",
            Kind::Usage => "usage",
            Kind::Io => "io",
            Kind::Format => "format",
            Kind::Numeric => "numeric",
            Kind::Config => "config",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub msg: String,
}

impl CliError {
    pub fn new(kind: Kind, msg: impl Into<String>) -> Self {
        CliError { kind, msg: msg.into() }
    }
}

/// One line: `error: kind=<kind> msg="<escaped message>"`.
impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg: String = self.msg.chars().flat_map(|c| c.escape_default()).collect();
        write!(f, "error: kind={} msg=\"{msg}\"", self.kind.as_str())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn from_display(kind: Kind, e: &impl fmt::Display) -> CliError {
    CliError::new(kind, e.to_string())
}

impl From<TextError> for CliError {
    fn from(e: TextError) -> Self {
        let kind = match e {
            TextError::Io { .. } => Kind::Io,
            _ => Kind::Format,
        };
        from_display(kind, &e)
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        let kind = match e {
            EmbeddingError::Io { .. } => Kind::Io,
            EmbeddingError::Config(_) => Kind::Config,
            EmbeddingError::Diverged => Kind::Numeric,
            EmbeddingError::EmptyCorpus | EmbeddingError::DimensionMismatch { .. } | EmbeddingError::Format(_) => Kind::Format,
        };
        from_display(kind, &e)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let kind = match e {
            ModelError::Io { .. } => Kind::Io,
            ModelError::Config(_) => Kind::Config,
            ModelError::Tensor(TensorError::NonFinite { .. }) => Kind::Numeric,
            ModelError::Tensor(_) => Kind::Other,
            ModelError::Format(_)
            | ModelError::Shape(_)
            | ModelError::InputDim { .. }
            | ModelError::EmbeddingMode { .. }
            | ModelError::Fingerprint { .. }
            | ModelError::EmptyInput => Kind::Format,
        };
        from_display(kind, &e)
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let kind = match e {
            TrainError::Model(m) => return m.into(),
            TrainError::Io { .. } => Kind::Io,
            TrainError::Config(_) | TrainError::CheckpointMismatch(_) => Kind::Config,
            TrainError::Diverged { .. } | TrainError::NonFiniteGradient { .. } => Kind::Numeric,
            TrainError::EmptySplit(_) | TrainError::Format(_) => Kind::Format,
        };
        from_display(kind, &e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let kind = match e {
            ConfigError::Io { .. } => Kind::Io,
            _ => Kind::Config,
        };
        from_display(kind, &e)
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(c) => c.into(),
            ExperimentError::Text(t) => t.into(),
            ExperimentError::Embedding(t) => t.into(),
            ExperimentError::Invalid(_) => from_display(Kind::Config, &e),
            ExperimentError::MissingInput(_) | ExperimentError::Io { .. } => from_display(Kind::Io, &e),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Text(t) => t.into(),
            SynthError::Io { .. } => from_display(Kind::Io, &e),
            _ => from_display(Kind::Config, &e),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        from_display(Kind::Format, &e)
    }
}
