mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use aote_core::embed::EmbeddingMode;
use aote_core::experiment::Scenario;
use clap::{Args, Parser, Subcommand, ValueEnum};

use error::{CliError, Kind};

#[derive(Parser, Debug)]
#[command(name = "aote", version, about = "Aspect and opinion term extraction with coupled attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Normalize, casefold and tokenize raw text, one review per line.
    Preprocess(PreprocessArgs),
    /// Train a subword skip-gram embedding table on tokenized text.
    EmbedTrain(EmbedTrainArgs),
    /// Train a sequence labeler on a labeled corpus.
    Train(TrainArgs),
    /// Tag a corpus with a trained model.
    Predict(PredictArgs),
    /// Score predicted tags against gold tags.
    Evaluate(EvaluateArgs),
    /// Run an experiment scenario (grid search) from a spec file.
    Experiment(ExperimentArgs),
    /// Generate a synthetic labeled corpus and embedding text.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    /// Raw text, one review per line.
    #[arg(long)]
    input: PathBuf,
    /// `informal<TAB>formal` normalization lexicon.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Tokenized output, one sentence per line.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EmbedTrainArgs {
    /// Tokenized text, one sentence per line.
    #[arg(long)]
    corpus: PathBuf,
    /// Binary embedding table to write.
    #[arg(long)]
    out: PathBuf,
    /// Starting hyperparameters: general, domain or hybrid.
    #[arg(long)]
    preset: Option<EmbeddingMode>,
    /// INI file; its `[embedding]` section overrides the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write word vectors in the text format.
    #[arg(long)]
    vectors: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EmbeddingPaths {
    /// General-domain embedding table.
    #[arg(long)]
    general: Option<PathBuf>,
    /// In-domain embedding table.
    #[arg(long)]
    domain: Option<PathBuf>,
    /// Hybrid embedding table.
    #[arg(long)]
    hybrid: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training corpus (`token<TAB>tag`); falls back to `[data] train`.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Validation corpus; falls back to `[data] val`.
    #[arg(long)]
    val: Option<PathBuf>,
    #[command(flatten)]
    embeddings: EmbeddingPaths,
    /// INI file with `[model]`, `[train]` and `[data]` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for initialization and training.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the model, checkpoint and history.
    #[arg(long)]
    out: PathBuf,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum InputFormat {
    /// `token<TAB>tag` corpus; tags are ignored.
    Corpus,
    /// Tokenized text, one sentence per line.
    Text,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "corpus")]
    input_format: InputFormat,
    /// Embedding tables; default to the paths recorded in the model.
    #[command(flatten)]
    embeddings: EmbeddingPaths,
    /// Tagged corpus to write; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Also write the metrics as `key=value` lines.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Experiment spec (INI).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `[experiment] scenario`.
    #[arg(long)]
    scenario: Option<Scenario>,
    /// Also run every later scenario, each seeded by the previous winner.
    #[arg(long)]
    chain: bool,
    /// Overrides `[experiment] out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `[experiment] seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Labeled sentences across train/val/test.
    #[arg(long)]
    sentences: Option<usize>,
    /// Probability that an aspect is lexically ambiguous.
    #[arg(long)]
    coupling: Option<f64>,
    /// Maximum filler tokens between an aspect and its opinion.
    #[arg(long)]
    max_gap: Option<usize>,
    #[arg(long)]
    aspect_vocab: Option<usize>,
    #[arg(long)]
    ambiguous_vocab: Option<usize>,
    #[arg(long)]
    opinion_vocab: Option<usize>,
    #[arg(long)]
    domain_sentences: Option<usize>,
    #[arg(long)]
    general_sentences: Option<usize>,
}

fn usage_line(e: &clap::Error) -> String {
    let text = e.to_string();
    let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
    line.trim_start_matches("error: ").to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => {
            eprintln!("{}", CliError::new(Kind::Usage, usage_line(&e)));
            return ExitCode::from(Kind::Usage.exit_code() as u8);
        }
    };
    let result = match cli.command {
        Command::Preprocess(a) => commands::preprocess(a),
        Command::EmbedTrain(a) => commands::embed_train(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Experiment(a) => commands::experiment(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}
