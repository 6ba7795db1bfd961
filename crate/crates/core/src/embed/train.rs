use std::collections::{BTreeSet, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::subword::{bucket, ngrams};
use super::{EmbeddingConfig, EmbeddingError, EmbeddingTable};
use crate::tensor::{dot, sigmoid};

/// Exponent applied to unigram counts for the negative-sampling distribution.
pub const NEGATIVE_POWER: f64 = 0.75;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainStats {
    /// Mean loss per (target, context) pair, one entry per epoch.
    pub epoch_losses: Vec<f64>,
    pub tokens: usize,
}

/// Normalized `count^0.75` distribution over the vocabulary.
pub fn negative_distribution(counts: &[u64]) -> Vec<f64> {
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(NEGATIVE_POWER)).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

pub fn train(corpus: &[Vec<String>], config: &EmbeddingConfig) -> Result<EmbeddingTable, EmbeddingError> {
    train_with_stats(corpus, config).map(|(t, _)| t)
}

/// Skip-gram with negative sampling over subword-augmented inputs,
/// single-threaded and deterministic for a fixed seed.
pub fn train_with_stats(
    corpus: &[Vec<String>],
    config: &EmbeddingConfig,
) -> Result<(EmbeddingTable, TrainStats), EmbeddingError> {
    config.validate()?;
    let (words, counts) = build_vocab(corpus, config.min_count);
    if words.is_empty() {
        return Err(EmbeddingError::EmptyCorpus);
    }
    let dim = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let word_buckets: Vec<Vec<u32>> = words
        .iter()
        .map(|w| {
            ngrams(w, config.n_min, config.n_max)
                .iter()
                .map(|g| bucket(g, config.buckets))
                .collect()
        })
        .collect();
    let bucket_ids: Vec<u32> = word_buckets
        .iter()
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let bound = 1.0 / dim as f64;
    let mut word_vectors: Vec<f64> = (0..words.len() * dim).map(|_| rng.random_range(-bound..bound)).collect();
    let mut ngram_vectors: Vec<f64> = (0..bucket_ids.len() * dim).map(|_| rng.random_range(-bound..bound)).collect();
    let mut output = vec![0.0; words.len() * dim];

    let subword_rows: Vec<Vec<usize>> = word_buckets
        .iter()
        .map(|bs| bs.iter().map(|b| bucket_ids.binary_search(b).unwrap()).collect())
        .collect();
    let index: HashMap<&str, usize> = words.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| s.iter().filter_map(|w| index.get(w.as_str()).copied()).collect())
        .collect();
    let tokens_per_epoch: usize = sentences.iter().map(Vec::len).sum();
    let total_tokens = (tokens_per_epoch * config.epochs).max(1);
    let negatives = WeightedIndex::new(negative_distribution(&counts)).map_err(|_| EmbeddingError::EmptyCorpus)?;

    let mut hidden = vec![0.0; dim];
    let mut grad = vec![0.0; dim];
    let mut processed = 0usize;
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        let mut loss_sum = 0.0;
        let mut pairs = 0usize;
        for sent in &sentences {
            for (pos, &target) in sent.iter().enumerate() {
                let lr = config.lr * (1.0 - processed as f64 / total_tokens as f64);
                processed += 1;
                let radius = rng.random_range(1..=config.window);
                let lo = pos.saturating_sub(radius);
                let hi = (pos + radius).min(sent.len() - 1);
                let rows = &subword_rows[target];
                let inv = 1.0 / (rows.len() + 1) as f64;
                for (c, &context) in sent.iter().enumerate().take(hi + 1).skip(lo) {
                    if c == pos {
                        continue;
                    }
                    // hidden = mean of the word row and its n-gram rows
                    hidden.copy_from_slice(&word_vectors[target * dim..(target + 1) * dim]);
                    for &r in rows {
                        for (h, v) in hidden.iter_mut().zip(&ngram_vectors[r * dim..(r + 1) * dim]) {
                            *h += v;
                        }
                    }
                    hidden.iter_mut().for_each(|h| *h *= inv);
                    grad.iter_mut().for_each(|g| *g = 0.0);

                    loss_sum += logistic_update(&hidden, &mut grad, &mut output[context * dim..(context + 1) * dim], true, lr);
                    if words.len() > 1 {
                        for _ in 0..config.negatives {
                            let neg = loop {
                                let n = negatives.sample(&mut rng);
                                if n != context {
                                    break n;
                                }
                            };
                            loss_sum += logistic_update(&hidden, &mut grad, &mut output[neg * dim..(neg + 1) * dim], false, lr);
                        }
                    }
                    pairs += 1;

                    for (w, g) in word_vectors[target * dim..(target + 1) * dim].iter_mut().zip(&grad) {
                        *w += g;
                    }
                    for &r in rows {
                        for (w, g) in ngram_vectors[r * dim..(r + 1) * dim].iter_mut().zip(&grad) {
                            *w += g;
                        }
                    }
                }
            }
        }
        epoch_losses.push(if pairs == 0 { 0.0 } else { loss_sum / pairs as f64 });
    }

    if !(word_vectors.iter().chain(&ngram_vectors).all(|v| v.is_finite())) {
        return Err(EmbeddingError::Diverged);
    }
    let table = EmbeddingTable::from_parts(config.clone(), words, counts, word_vectors, bucket_ids, ngram_vectors)?;
    Ok((
        table,
        TrainStats {
            epoch_losses,
            tokens: tokens_per_epoch,
        },
    ))
}

/// One binary logistic term; accumulates the input gradient into `grad` and
/// updates the output row in place. Returns the term's loss.
fn logistic_update(hidden: &[f64], grad: &mut [f64], out_row: &mut [f64], label: bool, lr: f64) -> f64 {
    let score = sigmoid(dot(hidden, out_row));
    let target = if label { 1.0 } else { 0.0 };
    let alpha = lr * (target - score);
    for (g, &o) in grad.iter_mut().zip(out_row.iter()) {
        *g += alpha * o;
    }
    for (o, &h) in out_row.iter_mut().zip(hidden) {
        *o += alpha * h;
    }
    let p = if label { score } else { 1.0 - score };
    -p.max(1e-12).ln()
}

/// Words with at least `min_count` occurrences, by descending count then lexically.
fn build_vocab(corpus: &[Vec<String>], min_count: usize) -> (Vec<String>, Vec<u64>) {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for w in corpus.iter().flatten() {
        *counts.entry(w.as_str()).or_default() += 1;
    }
    let mut entries: Vec<(&str, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count as u64)
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    entries.into_iter().map(|(w, c)| (w.to_string(), c)).unzip()
}
