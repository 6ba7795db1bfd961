#![allow(dead_code)]

use std::collections::BTreeSet;

use aote_core::metrics::Counts;
use aote_core::text::{EntityKind, EntitySpan, Label};
use rand::Rng;

/// Every `[i, j)` that is a maximal run under the lenient reading: a run of
/// kind K starts at a `B-K`, or at an `I-K` not preceded by a K tag, and
/// extends over the following `I-K` tags.
pub fn brute_force_spans(tags: &[Label]) -> BTreeSet<EntitySpan> {
    let n = tags.len();
    let mut out = BTreeSet::new();
    for i in 0..n {
        let Some(kind) = tags[i].kind() else { continue };
        let starts = i == 0 || tags[i].is_begin() || tags[i - 1].kind() != Some(kind);
        if !starts {
            continue;
        }
        for j in i + 1..=n {
            let inner = (i + 1..j).all(|t| tags[t].kind() == Some(kind) && !tags[t].is_begin());
            let ends = j == n || tags[j].kind() != Some(kind) || tags[j].is_begin();
            if inner && ends {
                out.insert(EntitySpan::new(kind, i, j));
            }
        }
    }
    out
}

pub fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// `(precision, recall, f1)`.
pub type Prf = (f64, f64, f64);

/// Scores per entity kind plus macro means, from span sets.
pub fn oracle_entity_scores(gold: &[Vec<Label>], pred: &[Vec<Label>]) -> ([Prf; 2], Prf) {
    let mut per = [(0.0, 0.0, 0.0); 2];
    for (slot, kind) in [EntityKind::Aspect, EntityKind::Sentiment].into_iter().enumerate() {
        let (mut tp, mut np, mut ng) = (0u64, 0u64, 0u64);
        for (g, p) in gold.iter().zip(pred) {
            let gs: BTreeSet<_> = brute_force_spans(g).into_iter().filter(|s| s.kind == kind).collect();
            let ps: BTreeSet<_> = brute_force_spans(p).into_iter().filter(|s| s.kind == kind).collect();
            tp += gs.intersection(&ps).count() as u64;
            np += ps.len() as u64;
            ng += gs.len() as u64;
        }
        let (pr, rc) = (ratio(tp, np), ratio(tp, ng));
        let f1 = if pr + rc == 0.0 { 0.0 } else { 2.0 * pr * rc / (pr + rc) };
        per[slot] = (pr, rc, f1);
    }
    let mean = |f: fn(&Prf) -> f64| (f(&per[0]) + f(&per[1])) / 2.0;
    (per, (mean(|x| x.0), mean(|x| x.1), mean(|x| x.2)))
}

pub fn random_tags<R: Rng>(rng: &mut R, max_len: usize) -> Vec<Label> {
    let len = rng.random_range(0..=max_len);
    (0..len).map(|_| Label::ALL[rng.random_range(0..Label::COUNT)]).collect()
}

/// Random non-overlapping spans over `len` tokens.
pub fn random_spans<R: Rng>(rng: &mut R, len: usize) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut t = 0;
    while t < len {
        if rng.random_bool(0.4) {
            let width = rng.random_range(1..=(len - t).min(4));
            let kind = if rng.random_bool(0.5) { EntityKind::Aspect } else { EntityKind::Sentiment };
            spans.push(EntitySpan::new(kind, t, t + width));
            t += width;
        } else {
            t += 1;
        }
    }
    spans
}

/// Counts whose precision and recall are exactly `p / scale` and `r / scale`.
pub fn counts_for(p: u64, r: u64, scale: u64) -> Counts {
    let tp = p * r;
    Counts {
        tp,
        fp: scale * r - tp,
        fn_: scale * p - tp,
    }
}

/// Per-label precision/recall/F1 of the best model at token level.
pub const TOKEN_TABLE: [(&str, f64, f64, f64); 5] = [
    ("B-ASPECT", 0.913, 0.919, 0.916),
    ("I-ASPECT", 0.842, 0.906, 0.873),
    ("B-SENTIMENT", 0.939, 0.939, 0.939),
    ("I-SENTIMENT", 0.907, 0.865, 0.886),
    ("O", 0.957, 0.957, 0.957),
];
pub const TOKEN_AVERAGE: (f64, f64, f64) = (0.912, 0.917, 0.914);

pub const ENTITY_TABLE: [(&str, f64, f64, f64); 2] = [("ASPECT", 0.88, 0.91, 0.89), ("SENTIMENT", 0.91, 0.91, 0.91)];
pub const ENTITY_AVERAGE: (f64, f64, f64) = (0.895, 0.91, 0.90);

/// Rounds to the number of decimals printed in the reference table.
pub fn round_to(x: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (x * s).round() / s
}
