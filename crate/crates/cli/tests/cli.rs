use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn aote(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aote")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = aote(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Exit code plus the single stderr line.
fn fails(args: &[&str]) -> (i32, String) {
    let out = aote(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error: kind="), "{err}");
    (out.status.code().unwrap(), err)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: &str = "\
[model]
architecture = cmla
rnn = bgru
hidden = 4
layers = 1
k = 2
dropout = 0.2
embedding = double

[train]
batch_size = 8
max_epochs = 2
patience = 5
lr = 0.01

[embedding]
dim = 6
epochs = 1
buckets = 5000
";

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        std::fs::write(root.join("tiny.ini"), TINY).unwrap();
        Workspace { _dir: dir, root }
    }

    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// synth → embed-train ×2 → train, returning the model directory.
    fn trained(&self) -> PathBuf {
        let data = self.p("data");
        ok(&[
            "synth", "--out", s(&data), "--sentences", "40", "--domain-sentences", "80", "--general-sentences", "80",
            "--seed", "3",
        ]);
        let cfg = self.p("tiny.ini");
        for (corpus, table, preset) in [("general.txt", "general.bin", "general"), ("domain.txt", "domain.bin", "domain")] {
            ok(&[
                "embed-train", "--corpus", s(&data.join(corpus)), "--out", s(&self.p(table)), "--preset", preset, "--config",
                s(&cfg),
            ]);
        }
        let run = self.p("run");
        ok(&[
            "train", "--train", s(&data.join("train.tsv")), "--val", s(&data.join("val.tsv")), "--general",
            s(&self.p("general.bin")), "--domain", s(&self.p("domain.bin")), "--config", s(&cfg), "--out", s(&run),
        ]);
        run
    }
}

#[test]
fn full_pipeline_round_trips_through_evaluate() {
    let w = Workspace::new();
    let run = w.trained();
    for f in ["model.bin", "checkpoint.bin", "history.tsv", "train.ini"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let history = std::fs::read_to_string(run.join("history.tsv")).unwrap();
    assert_eq!(history.lines().count(), 3);

    let test = w.p("data/test.tsv");
    let pred = w.p("pred.tsv");
    // embedding paths come from the model file
    ok(&["predict", "--model", s(&run.join("model.bin")), "--input", s(&test), "--out", s(&pred)]);
    let report = w.p("report.txt");
    let tables = ok(&["evaluate", "--gold", s(&test), "--pred", s(&pred), "--report", s(&report)]);
    assert!(tables.contains("Token level") && tables.contains("Entity level"), "{tables}");
    assert!(tables.contains("B-ASPECT") && tables.contains("SENTIMENT"));
    let kv = std::fs::read_to_string(&report).unwrap();
    assert!(kv.contains("token.average.f1=") && kv.contains("entity.average.f1="), "{kv}");

    // predictions re-read without loss: self-evaluation is perfect wherever defined
    let same = ok(&["evaluate", "--gold", s(&pred), "--pred", s(&pred)]);
    let stdout = ok(&["predict", "--model", s(&run.join("model.bin")), "--input", s(&test)]);
    assert_eq!(stdout, std::fs::read_to_string(&pred).unwrap());
    assert!(same.lines().any(|l| l.starts_with("Average")));
}

#[test]
fn evaluate_identical_files_gives_perfect_tables() {
    let w = Workspace::new();
    let gold = w.p("gold.tsv");
    std::fs::write(&gold, "kamar\tB-ASPECT\nmandi\tI-ASPECT\ntidak\tB-SENTIMENT\nbersih\tI-SENTIMENT\n.\tO\n\n").unwrap();
    let out = ok(&["evaluate", "--gold", s(&gold), "--pred", s(&gold)]);
    let rows: Vec<&str> = out.lines().filter(|l| l.starts_with(['B', 'I', 'O', 'A', 'S'])).collect();
    assert_eq!(rows.len(), 9, "{out}");
    for row in rows {
        let cols: Vec<&str> = row.split_whitespace().collect();
        assert!(cols[1..4].iter().all(|c| c.parse::<f64>().unwrap() == 1.0), "{row}");
    }
}

#[test]
fn resume_of_a_finished_run_keeps_the_model() {
    let w = Workspace::new();
    let run = w.trained();
    let before = std::fs::read(run.join("model.bin")).unwrap();
    let data = w.p("data");
    let out = ok(&[
        "train", "--train", s(&data.join("train.tsv")), "--val", s(&data.join("val.tsv")), "--general",
        s(&w.p("general.bin")), "--domain", s(&w.p("domain.bin")), "--config", s(&w.p("tiny.ini")), "--out", s(&run),
        "--resume",
    ]);
    assert!(out.contains("resuming after epoch 2"), "{out}");
    assert_eq!(std::fs::read(run.join("model.bin")).unwrap(), before);
}

#[test]
fn synth_is_reproducible() {
    let w = Workspace::new();
    for d in ["a", "b"] {
        ok(&["synth", "--out", s(&w.p(d)), "--sentences", "30", "--seed", "4", "--coupling", "0.8"]);
    }
    for f in ["train.tsv", "val.tsv", "test.tsv", "domain.txt", "general.txt"] {
        assert_eq!(std::fs::read(w.p("a").join(f)).unwrap(), std::fs::read(w.p("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn preprocess_normalizes_and_tokenizes() {
    let w = Workspace::new();
    std::fs::write(w.p("raw.txt"), "Kamar mandi mampet gak ada handuk dn sabun.\n\n").unwrap();
    std::fs::write(w.p("lex.tsv"), "gak\ttidak\ndn\tdan\n").unwrap();
    ok(&["preprocess", "--input", s(&w.p("raw.txt")), "--lexicon", s(&w.p("lex.tsv")), "--out", s(&w.p("tok.txt"))]);
    assert_eq!(
        std::fs::read_to_string(w.p("tok.txt")).unwrap(),
        "kamar mandi mampet tidak ada handuk dan sabun .\n"
    );
}

#[test]
fn experiment_runs_a_one_cell_grid() {
    let w = Workspace::new();
    let data = w.p("data");
    ok(&["synth", "--out", s(&data), "--sentences", "30", "--domain-sentences", "60", "--general-sentences", "60"]);
    ok(&["embed-train", "--corpus", s(&data.join("general.txt")), "--out", s(&w.p("g.bin")), "--config", s(&w.p("tiny.ini"))]);
    let spec = format!(
        "[experiment]\nscenario = P2\nseed = 1\nout = {}\n\n[data]\ntrain = {}\nval = {}\ngeneral = {}\n\n{}\n[sweep]\nembedding = general\n",
        s(&w.p("exp")),
        s(&data.join("train.tsv")),
        s(&data.join("val.tsv")),
        s(&w.p("g.bin")),
        TINY.split("[embedding]").next().unwrap()
    );
    std::fs::write(w.p("spec.ini"), spec).unwrap();
    let out = ok(&["experiment", "--config", s(&w.p("spec.ini"))]);
    assert!(out.contains("emb=general"), "{out}");
    for f in ["spec.ini", "results.tsv", "ranking.txt", "winner.ini", "best_model.bin", "cells/000/metrics.txt"] {
        assert!(w.p("exp").join(f).exists(), "{f}");
    }
    let first = std::fs::read(w.p("exp/results.tsv")).unwrap();
    ok(&["experiment", "--config", s(&w.p("spec.ini"))]);
    assert_eq!(std::fs::read(w.p("exp/results.tsv")).unwrap(), first);
}

#[test]
fn failures_have_distinct_exit_codes() {
    let w = Workspace::new();
    let (code, err) = fails(&["evaluate", "--gold", "x", "--bogus"]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("kind=usage"));

    let (code, err) = fails(&["evaluate", "--gold", s(&w.p("missing.tsv")), "--pred", s(&w.p("missing.tsv"))]);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("kind=io"));

    std::fs::write(w.p("bad.tsv"), "kamar\tB-WRONG\n").unwrap();
    let (code, err) = fails(&["evaluate", "--gold", s(&w.p("bad.tsv")), "--pred", s(&w.p("bad.tsv"))]);
    assert_eq!(code, 4, "{err}");
    assert!(err.contains("line 1"));

    std::fs::write(w.p("bad.ini"), "[train]\nwarmup = 3\n").unwrap();
    std::fs::write(w.p("t.txt"), "a b c\n").unwrap();
    let (code, err) = fails(&["embed-train", "--corpus", s(&w.p("t.txt")), "--out", s(&w.p("e.bin")), "--config", s(&w.p("bad.ini"))]);
    assert_eq!(code, 6, "{err}");
    assert!(err.contains("warmup"));
}

#[test]
fn inputs_are_never_overwritten() {
    let w = Workspace::new();
    std::fs::write(w.p("raw.txt"), "Bersih sekali\n").unwrap();
    let (code, _) = fails(&["preprocess", "--input", s(&w.p("raw.txt")), "--out", s(&w.p("raw.txt"))]);
    assert_eq!(code, 2);
    assert_eq!(std::fs::read_to_string(w.p("raw.txt")).unwrap(), "Bersih sekali\n");
}
