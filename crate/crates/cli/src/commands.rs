use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use aote_core::config::{model_section, train_section, Config};
use aote_core::embed::{train_with_stats, EmbeddingMode};
use aote_core::experiment::{run_chain, run_scenario, DataPaths, EmbeddingSet, ExperimentSpec};
use aote_core::metrics::{entity_metrics, token_metrics};
use aote_core::model::{Model, ModelConfig};
use aote_core::synth::{parse_text, render_text, synth_corpus, SynthConfig};
use aote_core::text::{preprocess as normalize, read_corpus, render_corpus, LabeledSentence, NormalizationLexicon};
use aote_core::trainer::{examples, predict_all, Checkpoint, EpochStats, TrainConfig, Trainer};

use crate::error::{CliError, CliResult, Kind};
use crate::{
    EmbedTrainArgs, EmbeddingPaths, EvaluateArgs, ExperimentArgs, InputFormat, PredictArgs, PreprocessArgs, SynthArgs,
    TrainArgs,
};

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::new(Kind::Io, format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::new(Kind::Io, format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::new(Kind::Io, format!("{}: {e}", dir.display())))
}

/// Refuses to write over any of the inputs.
fn guard_output(out: &Path, inputs: &[&Path]) -> CliResult<()> {
    let Ok(out) = out.canonicalize() else { return Ok(()) };
    for input in inputs {
        if input.canonicalize().is_ok_and(|p| p == out) {
            return Err(CliError::new(
                Kind::Usage,
                format!("output {} would overwrite an input file", out.display()),
            ));
        }
    }
    Ok(())
}

fn load_config(path: &Option<PathBuf>) -> CliResult<Config> {
    Ok(match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    })
}

fn require_path(flag: Option<PathBuf>, config: &Config, key: &str) -> CliResult<PathBuf> {
    flag.or_else(|| config.get("data", key).map(PathBuf::from))
        .ok_or_else(|| CliError::new(Kind::Usage, format!("--{key} is required (or [data] {key} in the config)")))
}

fn embedding_paths(flags: EmbeddingPaths, config: &Config) -> (Option<PathBuf>, Option<PathBuf>, Option<PathBuf>) {
    let pick = |flag: Option<PathBuf>, key: &str| flag.or_else(|| config.get("data", key).map(PathBuf::from));
    (
        pick(flags.general, "general"),
        pick(flags.domain, "domain"),
        pick(flags.hybrid, "hybrid"),
    )
}

pub fn preprocess(a: PreprocessArgs) -> CliResult<()> {
    guard_output(&a.out, &[&a.input])?;
    let lexicon = match &a.lexicon {
        Some(p) => NormalizationLexicon::load(p)?,
        None => NormalizationLexicon::new(),
    };
    let raw = read(&a.input)?;
    let sentences: Vec<Vec<String>> = raw
        .lines()
        .map(|l| normalize(l, &lexicon))
        .filter(|t| !t.is_empty())
        .collect();
    write(&a.out, &render_text(&sentences))?;
    println!("preprocessed {} sentences", sentences.len());
    Ok(())
}

pub fn embed_train(a: EmbedTrainArgs) -> CliResult<()> {
    guard_output(&a.out, &[&a.corpus])?;
    let config = load_config(&a.config)?;
    let mut cfg = config.embedding(a.preset.unwrap_or(EmbeddingMode::General))?;
    if let Some(p) = a.preset {
        // an explicit flag beats the file's preset but keeps its overrides
        let file_preset: Option<EmbeddingMode> = config.value("embedding", "preset")?;
        if file_preset.is_some_and(|f| f != p) {
            return Err(CliError::new(
                Kind::Config,
                format!("--preset {p} conflicts with [embedding] preset = {}", file_preset.unwrap()),
            ));
        }
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let corpus = parse_text(&read(&a.corpus)?);
    let (table, stats) = train_with_stats(&corpus, &cfg)?;
    table.save(&a.out)?;
    if let Some(v) = &a.vectors {
        guard_output(v, &[&a.corpus])?;
        table.save_text(v)?;
    }
    for (i, loss) in stats.epoch_losses.iter().enumerate() {
        println!("epoch {} loss {loss:.6}", i + 1);
    }
    println!(
        "vocab {} dim {} tokens {} fingerprint {}",
        table.vocab_size(),
        table.dim(),
        stats.tokens,
        table.fingerprint()
    );
    Ok(())
}

fn epoch_line(s: &EpochStats) -> String {
    format!(
        "{}\t{:.6}\t{:.6}\t{:.4}\t{:.4}\t{:.4}\t{}",
        s.epoch,
        s.train_loss,
        s.validation.loss,
        s.validation.token_f1,
        s.validation.token_accuracy,
        s.validation.entity_f1,
        s.decision.as_str()
    )
}

pub fn train(a: TrainArgs) -> CliResult<()> {
    let config = load_config(&a.config)?;
    let train_path = require_path(a.train, &config, "train")?;
    let val_path = require_path(a.val, &config, "val")?;
    let (general, domain, hybrid) = embedding_paths(a.embeddings, &config);
    let mut model_config = config.model(ModelConfig::best())?;
    let mut train_config = config.train(TrainConfig::default())?;
    if let Some(s) = a.seed {
        model_config.seed = s;
        train_config.seed = s;
    }
    let data = DataPaths {
        train: train_path.clone(),
        val: val_path.clone(),
        general,
        domain,
        hybrid,
        previous: None,
    };
    let (emb, refs) = EmbeddingSet::load(&data)?.input(model_config.embedding_mode)?;
    model_config.input_dim = emb.dim();
    model_config.validate()?;
    train_config.validate()?;

    let train_ex = examples(&read_corpus(&train_path)?, &emb);
    let val_ex = examples(&read_corpus(&val_path)?, &emb);
    create_dir(&a.out)?;
    let ckpt_path = a.out.join("checkpoint.bin");
    let history_path = a.out.join("history.tsv");
    let mut history = String::from("epoch\ttrain_loss\tval_loss\tval_token_f1\tval_token_accuracy\tval_entity_f1\tdecision\n");

    let mut trainer = if a.resume && ckpt_path.exists() {
        let ckpt = Checkpoint::load(&ckpt_path)?;
        if history_path.exists() {
            history = read(&history_path)?;
        }
        println!("resuming after epoch {}", ckpt.epoch());
        Trainer::resume(ckpt, &model_config, &train_config, &train_ex, &val_ex)?
    } else {
        Trainer::new(Model::new(model_config.clone())?, train_config.clone(), &train_ex, &val_ex)?
    };
    write(
        &a.out.join("train.ini"),
        &format!("{}\n{}", model_section(&model_config), train_section(&train_config)),
    )?;
    while !trainer.is_done() {
        let stats = trainer.run_epoch()?;
        let line = epoch_line(&stats);
        println!("{line}");
        history.push_str(&line);
        history.push('\n');
        trainer.checkpoint().save(&ckpt_path)?;
        write(&history_path, &history)?;
    }
    let (mut model, report) = trainer.finish();
    model.set_embeddings(refs);
    model.save(&a.out.join("model.bin"))?;
    println!(
        "best epoch {} of {} ({}); val entity F1 {:.4}",
        report.best_epoch,
        report.epochs_run(),
        report.stop_reason.map_or("running", |r| r.as_str()),
        report.val_entity_f1.get(report.best_epoch.saturating_sub(1)).copied().unwrap_or(0.0)
    );
    Ok(())
}

pub fn predict(a: PredictArgs) -> CliResult<()> {
    if let Some(out) = &a.out {
        guard_output(out, &[&a.input, &a.model])?;
    }
    let model = Model::load(&a.model)?;
    let mode = model.config().embedding_mode;
    let recorded: Vec<PathBuf> = model.embeddings().iter().map(|r| PathBuf::from(&r.path)).collect();
    let flags = a.embeddings;
    let any_flag = flags.general.is_some() || flags.domain.is_some() || flags.hybrid.is_some();
    let (general, domain, hybrid) = if any_flag {
        (flags.general, flags.domain, flags.hybrid)
    } else {
        let nth = |i: usize| recorded.get(i).cloned();
        match mode {
            EmbeddingMode::Double => (nth(0), nth(1), None),
            EmbeddingMode::General => (nth(0), None, None),
            EmbeddingMode::Domain => (None, nth(0), None),
            EmbeddingMode::Hybrid => (None, None, nth(0)),
        }
    };
    let data = DataPaths {
        general,
        domain,
        hybrid,
        ..DataPaths::default()
    };
    let (emb, _) = EmbeddingSet::load(&data)?.input(mode)?;
    model.check_embedding(&emb)?;

    let sentences: Vec<LabeledSentence> = match a.input_format {
        InputFormat::Corpus => read_corpus(&a.input)?,
        InputFormat::Text => parse_text(&read(&a.input)?)
            .into_iter()
            .map(LabeledSentence::unlabeled)
            .collect::<Result<_, _>>()?,
    };
    let tags = predict_all(&model, &examples(&sentences, &emb))?;
    let tagged = sentences
        .iter()
        .zip(tags)
        .map(|(s, t)| s.with_tags(t))
        .collect::<Result<Vec<_>, _>>()?;
    let text = render_corpus(&tagged);
    match &a.out {
        Some(p) => write(p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> CliResult<()> {
    let gold = read_corpus(&a.gold)?;
    let pred = read_corpus(&a.pred)?;
    if gold.len() != pred.len() {
        return Err(CliError::new(
            Kind::Format,
            format!("{} gold sentences but {} predicted", gold.len(), pred.len()),
        ));
    }
    for (i, (g, p)) in gold.iter().zip(&pred).enumerate() {
        if g.tokens() != p.tokens() {
            return Err(CliError::new(Kind::Format, format!("sentence {}: tokens differ between files", i + 1)));
        }
    }
    let g: Vec<_> = gold.iter().map(|s| s.tags()).collect();
    let p: Vec<_> = pred.iter().map(|s| s.tags()).collect();
    let token = token_metrics(&g, &p)?;
    let entity = entity_metrics(&g, &p)?;
    println!("Token level\n{}\nEntity level\n{}", token.format_table(), entity.format_table());
    if let Some(r) = &a.report {
        guard_output(r, &[&a.gold, &a.pred])?;
        write(r, &format!("{}{}", token.to_key_values(), entity.to_key_values()))?;
    }
    Ok(())
}

pub fn experiment(a: ExperimentArgs) -> CliResult<()> {
    let config = Config::load(&a.config)?;
    let mut spec = ExperimentSpec::from_config(&config)?;
    if let Some(s) = a.scenario {
        spec.scenario = s;
    }
    if let Some(out) = a.out {
        spec.out = out;
    }
    if let Some(seed) = a.seed {
        spec.seed = seed;
        spec.base.seed = seed;
        spec.train.seed = seed;
    }
    spec.validate()?;
    let results = if a.chain {
        run_chain(&spec)?
    } else {
        vec![run_scenario(&spec, None)?]
    };
    let mut out = String::new();
    for r in &results {
        writeln!(out, "{}", r.ranking_text()).unwrap();
    }
    print!("{out}");
    Ok(())
}

pub fn synth(a: SynthArgs) -> CliResult<()> {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        sentences: a.sentences.unwrap_or(d.sentences),
        aspect_vocab: a.aspect_vocab.unwrap_or(d.aspect_vocab),
        ambiguous_vocab: a.ambiguous_vocab.unwrap_or(d.ambiguous_vocab),
        opinion_vocab: a.opinion_vocab.unwrap_or(d.opinion_vocab),
        coupling: a.coupling.unwrap_or(d.coupling),
        max_gap: a.max_gap.unwrap_or(d.max_gap),
        domain_sentences: a.domain_sentences.unwrap_or(d.domain_sentences),
        general_sentences: a.general_sentences.unwrap_or(d.general_sentences),
        seed: a.seed.unwrap_or(d.seed),
    };
    let corpus = synth_corpus(&cfg)?;
    corpus.write(&a.out)?;
    let [tr, va, te] = cfg.split_sizes();
    println!("wrote {} (train {tr}, val {va}, test {te})", a.out.display());
    Ok(())
}
