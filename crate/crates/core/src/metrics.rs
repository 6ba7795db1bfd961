//! Token-level and entity-level precision, recall and F1.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::text::{decode_bio, EntityKind, EntitySpan, Label};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("{gold} gold sentences but {pred} predicted")]
    SentenceCount { gold: usize, pred: usize },
    #[error("sentence {sentence}: {gold} gold tags but {pred} predicted")]
    Alignment { sentence: usize, gold: usize, pred: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Token,
    Entity,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Token => "token",
            Level::Entity => "entity",
        }
    }

    fn decimals(self) -> usize {
        match self {
            Level::Token => 3,
            Level::Entity => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub name: String,
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold instances (tp + fn).
    pub support: u64,
    /// No predictions of this class: precision defined as 0.
    pub no_predictions: bool,
    /// No gold instances of this class: recall defined as 0.
    pub no_gold: bool,
}

impl ClassMetrics {
    fn from_counts(name: &str, c: Counts) -> Self {
        let predicted = c.tp + c.fp;
        let support = c.tp + c.fn_;
        let ratio = |n: u64, d: u64| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(c.tp, predicted);
        let recall = ratio(c.tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            name: name.to_string(),
            counts: c,
            precision,
            recall,
            f1,
            support,
            no_predictions: predicted == 0,
            no_gold: support == 0,
        }
    }
}

/// Per-class scores plus their unweighted (macro) means.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub level: Level,
    pub classes: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

impl MetricsReport {
    pub fn from_counts<S: AsRef<str>>(level: Level, classes: &[(S, Counts)]) -> Self {
        let classes: Vec<ClassMetrics> = classes
            .iter()
            .map(|(n, c)| ClassMetrics::from_counts(n.as_ref(), *c))
            .collect();
        let mean = |f: fn(&ClassMetrics) -> f64| {
            if classes.is_empty() {
                0.0
            } else {
                classes.iter().map(f).sum::<f64>() / classes.len() as f64
            }
        };
        MetricsReport {
            level,
            macro_precision: mean(|c| c.precision),
            macro_recall: mean(|c| c.recall),
            macro_f1: mean(|c| c.f1),
            classes,
        }
    }

    pub fn class(&self, name: &str) -> Option<&ClassMetrics> {
        self.classes.iter().find(|c| c.name == name)
    }

    /// Fixed-width table: one row per class then `Average`.
    pub fn format_table(&self) -> String {
        let p = self.level.decimals();
        let w = p + 5;
        let mut out = format!(
            "{:<12} {:>w$} {:>w$} {:>w$} {:>8}\n",
            "Label", "Precision", "Recall", "F1", "Support"
        );
        for c in &self.classes {
            writeln!(
                out,
                "{:<12} {:>w$.p$} {:>w$.p$} {:>w$.p$} {:>8}",
                c.name, c.precision, c.recall, c.f1, c.support
            )
            .unwrap();
        }
        let total: u64 = self.classes.iter().map(|c| c.support).sum();
        writeln!(
            out,
            "{:<12} {:>w$.p$} {:>w$.p$} {:>w$.p$} {:>8}",
            "Average", self.macro_precision, self.macro_recall, self.macro_f1, total
        )
        .unwrap();
        out
    }

    /// `level.class.field=value` lines, full precision.
    pub fn to_key_values(&self) -> String {
        let lvl = self.level.as_str();
        let mut out = String::new();
        for c in &self.classes {
            for (field, v) in [("precision", c.precision), ("recall", c.recall), ("f1", c.f1)] {
                writeln!(out, "{lvl}.{}.{field}={v}", c.name).unwrap();
            }
            writeln!(out, "{lvl}.{}.tp={}", c.name, c.counts.tp).unwrap();
            writeln!(out, "{lvl}.{}.fp={}", c.name, c.counts.fp).unwrap();
            writeln!(out, "{lvl}.{}.fn={}", c.name, c.counts.fn_).unwrap();
            writeln!(out, "{lvl}.{}.support={}", c.name, c.support).unwrap();
            if c.no_predictions {
                writeln!(out, "{lvl}.{}.flag=no_predictions", c.name).unwrap();
            }
            if c.no_gold {
                writeln!(out, "{lvl}.{}.flag=no_gold", c.name).unwrap();
            }
        }
        writeln!(out, "{lvl}.average.precision={}", self.macro_precision).unwrap();
        writeln!(out, "{lvl}.average.recall={}", self.macro_recall).unwrap();
        writeln!(out, "{lvl}.average.f1={}", self.macro_f1).unwrap();
        out
    }
}

fn check_aligned<G: AsRef<[Label]>, P: AsRef<[Label]>>(gold: &[G], pred: &[P]) -> Result<(), MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::SentenceCount {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.as_ref().len() != p.as_ref().len() {
            return Err(MetricsError::Alignment {
                sentence: i,
                gold: g.as_ref().len(),
                pred: p.as_ref().len(),
            });
        }
    }
    Ok(())
}

/// Per-label scores over all five labels (O included) and their macro mean.
pub fn token_metrics<G: AsRef<[Label]>, P: AsRef<[Label]>>(gold: &[G], pred: &[P]) -> Result<MetricsReport, MetricsError> {
    check_aligned(gold, pred)?;
    let mut counts = [Counts::default(); Label::COUNT];
    for (g, p) in gold.iter().zip(pred) {
        for (&gt, &pt) in g.as_ref().iter().zip(p.as_ref()) {
            if gt == pt {
                counts[gt.code()].tp += 1;
            } else {
                counts[pt.code()].fp += 1;
                counts[gt.code()].fn_ += 1;
            }
        }
    }
    let classes: Vec<(&str, Counts)> = Label::ALL.iter().map(|l| (l.as_str(), counts[l.code()])).collect();
    Ok(MetricsReport::from_counts(Level::Token, &classes))
}

/// Exact `(kind, start, end)` matches of decoded spans; macro mean over the two kinds.
pub fn entity_metrics<G: AsRef<[Label]>, P: AsRef<[Label]>>(gold: &[G], pred: &[P]) -> Result<MetricsReport, MetricsError> {
    check_aligned(gold, pred)?;
    let gold_spans: Vec<Vec<EntitySpan>> = gold.iter().map(|g| decode_bio(g.as_ref())).collect();
    let pred_spans: Vec<Vec<EntitySpan>> = pred.iter().map(|p| decode_bio(p.as_ref())).collect();
    Ok(entity_metrics_from_spans(&gold_spans, &pred_spans))
}

pub fn entity_metrics_from_spans(gold: &[Vec<EntitySpan>], pred: &[Vec<EntitySpan>]) -> MetricsReport {
    let mut counts = [Counts::default(); 2];
    let slot = |k: EntityKind| EntityKind::ALL.iter().position(|&x| x == k).unwrap();
    for (g, p) in gold.iter().zip(pred) {
        let gs: HashSet<&EntitySpan> = g.iter().collect();
        let ps: HashSet<&EntitySpan> = p.iter().collect();
        for s in &ps {
            if gs.contains(s) {
                counts[slot(s.kind)].tp += 1;
            } else {
                counts[slot(s.kind)].fp += 1;
            }
        }
        for s in gs.difference(&ps) {
            counts[slot(s.kind)].fn_ += 1;
        }
    }
    let classes: Vec<(&str, Counts)> = EntityKind::ALL.iter().map(|k| (k.as_str(), counts[slot(*k)])).collect();
    MetricsReport::from_counts(Level::Entity, &classes)
}

/// Fraction of tokens whose predicted tag equals the gold tag.
pub fn token_accuracy<G: AsRef<[Label]>, P: AsRef<[Label]>>(gold: &[G], pred: &[P]) -> Result<f64, MetricsError> {
    check_aligned(gold, pred)?;
    let (mut hit, mut total) = (0usize, 0usize);
    for (g, p) in gold.iter().zip(pred) {
        for (a, b) in g.as_ref().iter().zip(p.as_ref()) {
            hit += usize::from(a == b);
            total += 1;
        }
    }
    Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
}
