use aote_core::embed::{
    cosine, negative_distribution, ngrams, train, train_with_stats, DoubleEmbedding, EmbeddingConfig, EmbeddingError,
    EmbeddingMode, EmbeddingTable, InputEmbedding, TextVectors,
};
use proptest::prelude::*;

fn sentences(lines: &[&str], reps: usize) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for _ in 0..reps {
        for l in lines {
            out.push(l.split(' ').map(String::from).collect());
        }
    }
    out
}

fn toy_table(seed: u64) -> EmbeddingTable {
    let corpus = sentences(&["good clean room", "bad dirty room"], 500);
    train(&corpus, &EmbeddingConfig::scaled(16, 5).with_seed(seed)).unwrap()
}

/// "good" and "clean" share the context "room"; "dirty" shares none of
/// good's contexts. (With one shared context word on both sides the two
/// similarities are symmetric by construction, so the contexts are split.)
#[test]
fn words_with_shared_contexts_end_up_closer() {
    let corpus = sentences(&["good clean room", "bad dirty toilet"], 500);
    let t = train(&corpus, &EmbeddingConfig::scaled(16, 5).with_seed(7)).unwrap();
    let near = cosine(&t.vector("good"), &t.vector("clean"));
    let far = cosine(&t.vector("good"), &t.vector("dirty"));
    assert!(near > far, "good~clean {near} vs good~dirty {far}");
}

#[test]
fn training_is_deterministic() {
    assert_eq!(toy_table(3), toy_table(3));
    assert_ne!(toy_table(3), toy_table(4));
}

#[test]
fn final_epoch_loss_is_lower() {
    let corpus = sentences(&["good clean room", "bad dirty room"], 200);
    let (_, stats) = train_with_stats(&corpus, &EmbeddingConfig::scaled(16, 5).with_seed(1)).unwrap();
    assert_eq!(stats.epoch_losses.len(), 5);
    assert!(stats.epoch_losses[4] < stats.epoch_losses[0], "{:?}", stats.epoch_losses);
}

fn review_corpus() -> Vec<Vec<String>> {
    sentences(
        &[
            "kamar nya nyaman sekali",
            "kasur sangat nyaman dan bersih",
            "pelayanan ramah dan cepat",
            "sarapan enak tapi mahal",
            "kamar mandi kotor dan bau",
            "lokasi strategis dekat stasiun",
        ],
        60,
    )
}

#[test]
fn misspelling_is_closer_to_its_word_than_to_an_unrelated_one() {
    let t = train(&review_corpus(), &EmbeddingConfig::scaled(24, 5).with_seed(11)).unwrap();
    assert!(!t.contains("nyamn"));
    let typo = t.vector("nyamn");
    let to_word = cosine(&typo, &t.vector("nyaman"));
    let to_other = cosine(&typo, &t.vector("stasiun"));
    assert!(to_word > to_other, "nyamn~nyaman {to_word} vs nyamn~stasiun {to_other}");
}

#[test]
fn unrepresentable_oov_is_zero_and_self_cosine_is_one() {
    let t = toy_table(5);
    assert!(t.vector("ж").iter().all(|&v| v == 0.0));
    for w in ["good", "room", "goodness"] {
        let v = t.vector(w);
        assert!((cosine(&v, &v) - 1.0).abs() < 1e-12, "{w}");
    }
}

#[test]
fn binary_round_trip_is_exact() {
    let t = toy_table(9);
    let back = EmbeddingTable::from_bytes(&t.to_bytes()).unwrap();
    assert_eq!(back, t);
    assert_eq!(back.vector("clean"), t.vector("clean"));
    assert_eq!(back.fingerprint(), t.fingerprint());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.emb");
    t.save(&path).unwrap();
    assert_eq!(EmbeddingTable::load(&path).unwrap(), t);
}

#[test]
fn corrupted_files_are_format_errors() {
    let mut bytes = toy_table(9).to_bytes();
    let truncated = bytes[..bytes.len() - 3].to_vec();
    assert!(matches!(EmbeddingTable::from_bytes(&truncated), Err(EmbeddingError::Format(_))));
    bytes[0] = b'X';
    assert!(matches!(EmbeddingTable::from_bytes(&bytes), Err(EmbeddingError::Format(_))));
}

#[test]
fn text_export_has_one_row_per_word() {
    let t = toy_table(2);
    let text = t.to_text();
    let parsed = TextVectors::parse(&text).unwrap();
    assert_eq!(parsed.words.len(), t.vocab_size());
    assert_eq!(text.lines().count(), t.vocab_size() + 1);
    for (w, v) in parsed.words.iter().zip(&parsed.vectors) {
        assert_eq!(v, &t.vector(w), "17 significant digits reproduce the value");
    }
}

#[test]
fn double_lookup_concatenates() {
    let general = toy_table(1);
    let domain = train(&review_corpus(), &EmbeddingConfig::scaled(8, 1)).unwrap();
    let double = DoubleEmbedding::with_dims(general.clone(), domain.clone(), 16, 8).unwrap();
    for w in ["room", "nyaman", "unseenword"] {
        let mut expected = general.vector(w);
        expected.extend(domain.vector(w));
        assert_eq!(double.lookup(w), expected);
    }
    assert!(matches!(
        DoubleEmbedding::with_dims(general.clone(), domain.clone(), 300, 100),
        Err(EmbeddingError::DimensionMismatch { expected: 300, found: 16 })
    ));
    let input = InputEmbedding::Double(double);
    assert_eq!(input.mode(), EmbeddingMode::Double);
    assert_eq!(input.features(&["room", "kamar"]).shape(), &[2, 24]);
    assert_eq!(input.fingerprints(), vec![general.fingerprint(), domain.fingerprint()]);
}

#[test]
fn hand_enumerated_ngrams() {
    assert_eq!(ngrams("ab", 3, 3), vec!["<ab", "ab>"]);
    assert_eq!(ngrams("a", 3, 3), vec!["<a>"]);
}

proptest! {
    #[test]
    fn ngram_lengths_in_range(word in "[a-z]{1,12}", n_min in 1usize..4, extra in 0usize..4) {
        let n_max = n_min + extra;
        for g in ngrams(&word, n_min, n_max) {
            let n = g.chars().count();
            prop_assert!(n >= n_min && n <= n_max);
        }
    }

    #[test]
    fn negative_distribution_sums_to_one(counts in prop::collection::vec(1u64..10_000, 1..50)) {
        let p = negative_distribution(&counts);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let base = (counts[0] as f64).powf(0.75) / p[0];
        for (c, q) in counts.iter().zip(&p) {
            prop_assert!(((*c as f64).powf(0.75) / q - base).abs() < 1e-6 * base);
        }
    }

    #[test]
    fn cosine_conventions(v in prop::collection::vec(-10.0f64..10.0, 1..10)) {
        prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        prop_assert!((cosine(&v, &v) - 1.0).abs() < 1e-12);
        prop_assert!((cosine(&v, &neg) + 1.0).abs() < 1e-12);
        prop_assert_eq!(cosine(&v, &vec![0.0; v.len()]), 0.0);
    }
}
