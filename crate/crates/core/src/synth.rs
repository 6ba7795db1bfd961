//! Template-generated hotel reviews with gold BIO tags.
//!
//! Clauses are either *opinion* clauses (an aspect phrase plus an opinion
//! phrase, e.g. "kamar nya tidak bersih") or *neutral* clauses that reuse the
//! same shape with a non-evaluative ending (e.g. "lampu nya kemarin
//! dinyalakan"). Ambiguous nouns occur in both, so whether one of them is an
//! aspect can only be read off the opinion cue at the end of its clause,
//! possibly several filler tokens away. `coupling` is the probability that an
//! opinion clause's aspect is drawn from the ambiguous nouns; at 0 every
//! aspect word is lexically unambiguous.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::text::{write_corpus, Label, LabeledSentence, TextError};

const ASPECTS: &[&str] = &[
    "kamar", "kasur", "kamar mandi", "kolam renang", "sarapan", "pelayanan", "resepsionis", "wifi", "lokasi",
    "parkiran", "staf", "ac", "restoran", "fasilitas", "harga", "lobi", "menu", "toilet", "area parkir", "check in",
];
const AMBIGUOUS: &[&str] = &[
    "lampu", "pintu", "jendela", "lantai", "lift", "handuk", "bantal", "selimut", "tv", "kulkas", "cermin",
    "meja", "kursi", "lemari", "shower", "wastafel", "lampu tidur", "meja rias", "tangga", "karpet",
];
const OPINIONS: &[&str] = &[
    "bersih", "kotor", "nyaman", "ramah", "bagus", "buruk", "enak", "sempit", "luas", "bau", "wangi", "bising",
    "tenang", "cepat", "lambat", "mahal", "murah", "strategis", "rusak", "lengkap", "sejuk", "hangat", "jelek",
    "mantap",
];
const NEGATORS: &[&str] = &["tidak", "kurang"];
const INTENSIFIERS: &[&str] = &["sangat", "cukup", "agak", "lumayan", "terlalu"];
const FILLERS: &[&str] = &["nya", "yang", "di", "sini", "ini", "itu", "memang", "juga", "menurut", "saya", "waktu", "kemarin"];
const NEUTRAL_ENDINGS: &[&[&str]] = &[
    &["dinyalakan"],
    &["diganti"],
    &["dibuka"],
    &["dipindahkan"],
    &["diperbaiki"],
    &["ditutup"],
    &["dipakai"],
    &["tidak", "dinyalakan"],
    &["tidak", "dipakai"],
    &["belum", "diganti"],
    &["ada", "di", "lantai", "dua"],
];
const NEUTRAL_VERBS: &[&str] = &["membuka", "menutup", "memakai", "melihat", "mencari", "memindahkan"];
const SUBJECTS: &[&str] = &["saya", "kami", "teman", "istri", "anak"];
const PLAIN: &[&[&str]] = &[
    &["kami", "datang", "jam", "dua"],
    &["menginap", "dua", "malam"],
    &["untuk", "liburan", "keluarga"],
    &["pesan", "lewat", "aplikasi"],
];
const JOINERS: &[&str] = &["dan", "tapi", ",", "."];

/// Generic-text vocabulary for the general-domain embedding corpus.
const GENERAL_WORDS: &[&str] = &[
    "pemerintah", "kota", "jalan", "pasar", "sekolah", "rumah", "orang", "tahun", "hari", "baru", "besar", "kecil",
    "pergi", "datang", "membeli", "menjual", "membaca", "menulis", "buku", "berita", "air", "listrik", "harga",
    "makanan", "minuman", "mobil", "motor", "kereta", "stasiun", "bandara", "kantor", "warga", "desa", "sungai",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Total labeled sentences across the three splits.
    pub sentences: usize,
    /// Number of unambiguous aspect phrases used.
    pub aspect_vocab: usize,
    /// Number of ambiguous nouns used.
    pub ambiguous_vocab: usize,
    /// Number of opinion adjectives used.
    pub opinion_vocab: usize,
    pub coupling: f64,
    /// Maximum filler tokens between an aspect and its opinion.
    pub max_gap: usize,
    /// Unlabeled domain sentences and general-text sentences for embedding training.
    pub domain_sentences: usize,
    pub general_sentences: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sentences: 1000,
            aspect_vocab: ASPECTS.len(),
            ambiguous_vocab: AMBIGUOUS.len(),
            opinion_vocab: OPINIONS.len(),
            coupling: 0.5,
            max_gap: 3,
            domain_sentences: 2000,
            general_sentences: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("degenerate vocabulary: {0}")]
    Vocab(String),
    #[error("need at least 3 sentences (one per split), got {0}")]
    TooSmall(usize),
    #[error("coupling must be in [0, 1], got {0}")]
    Coupling(f64),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub train: Vec<LabeledSentence>,
    pub val: Vec<LabeledSentence>,
    pub test: Vec<LabeledSentence>,
    pub domain_text: Vec<Vec<String>>,
    pub general_text: Vec<Vec<String>>,
}

/// Upper bound on each vocabulary; beyond the built-in words, pseudo-words fill the rest.
pub const MAX_VOCAB: usize = 6000;

const SYLLABLES: [&str; 12] = ["ba", "ki", "ru", "me", "so", "ta", "ne", "pu", "lo", "ga", "di", "ho"];

/// Deterministic four-syllable pseudo-word; distinct for distinct `i < 12⁴`.
fn pseudo_word(i: usize) -> String {
    let n = SYLLABLES.len();
    (0..4).map(|p| SYLLABLES[(i / n.pow(p)) % n]).collect()
}

struct Vocab {
    aspects: Vec<String>,
    ambiguous: Vec<String>,
    opinions: Vec<String>,
}

impl SynthConfig {
    fn vocab(&self) -> Result<Vocab, SynthError> {
        // disjoint pseudo-word ranges keep the three classes apart
        let pick = |name: &str, n: usize, builtin: &[&str], range: usize| {
            if n == 0 || n > MAX_VOCAB {
                return Err(SynthError::Vocab(format!("{name} vocabulary must be 1..={MAX_VOCAB}, got {n}")));
            }
            let mut words: Vec<String> = builtin.iter().take(n).map(|w| w.to_string()).collect();
            words.extend((0..n - words.len()).map(|i| pseudo_word(range * MAX_VOCAB + i)));
            Ok(words)
        };
        Ok(Vocab {
            aspects: pick("aspect", self.aspect_vocab, ASPECTS, 0)?,
            ambiguous: pick("ambiguous", self.ambiguous_vocab, AMBIGUOUS, 1)?,
            opinions: pick("opinion", self.opinion_vocab, OPINIONS, 2)?,
        })
    }

    /// 60/20/20 split sizes, each at least 1.
    pub fn split_sizes(&self) -> [usize; 3] {
        let n = self.sentences;
        let val = (n / 5).max(1);
        let test = (n / 5).max(1);
        [n - val - test, val, test]
    }
}

struct Gen<'a> {
    rng: ChaCha8Rng,
    vocab: &'a Vocab,
    cfg: &'a SynthConfig,
    tokens: Vec<String>,
    tags: Vec<Label>,
}

impl Gen<'_> {
    fn push(&mut self, phrase: &str, first: Label, rest: Label) {
        for (i, w) in phrase.split(' ').enumerate() {
            self.tokens.push(w.to_string());
            self.tags.push(if i == 0 { first } else { rest });
        }
    }

    fn outside(&mut self, words: &[&str]) {
        for w in words {
            self.push(w, Label::O, Label::O);
        }
    }

    fn gap(&mut self) {
        let n = self.rng.random_range(0..=self.cfg.max_gap);
        for _ in 0..n {
            let w = *FILLERS.choose(&mut self.rng).unwrap();
            self.outside(&[w]);
        }
    }

    fn opinion(&mut self) {
        let adj = self.vocab.opinions.choose(&mut self.rng).unwrap().clone();
        match self.rng.random_range(0..4) {
            0 => {
                let neg = *NEGATORS.choose(&mut self.rng).unwrap();
                self.push(&format!("{neg} {adj}"), Label::BSentiment, Label::ISentiment);
            }
            1 => {
                let int = *INTENSIFIERS.choose(&mut self.rng).unwrap();
                self.outside(&[int]);
                self.push(&adj, Label::BSentiment, Label::ISentiment);
            }
            _ => self.push(&adj, Label::BSentiment, Label::ISentiment),
        }
    }

    fn aspect(&mut self) {
        let vocab = self.vocab;
        let pool = if self.rng.random_bool(self.cfg.coupling) {
            &vocab.ambiguous
        } else {
            &vocab.aspects
        };
        let a = pool.choose(&mut self.rng).unwrap();
        self.push(a, Label::BAspect, Label::IAspect);
    }

    fn opinion_clause(&mut self) {
        if self.rng.random_bool(0.8) {
            self.aspect();
            self.gap();
            self.opinion();
        } else {
            self.opinion();
            self.outside(&["sekali"]);
            self.aspect();
            self.outside(&["nya"]);
        }
    }

    fn neutral_clause(&mut self) {
        match self.rng.random_range(0..10) {
            0..=5 => {
                let n = self.vocab.ambiguous.choose(&mut self.rng).unwrap().clone();
                self.push(&n, Label::O, Label::O);
                self.gap();
                let end = *NEUTRAL_ENDINGS.choose(&mut self.rng).unwrap();
                self.outside(end);
            }
            6..=7 => {
                let s = *SUBJECTS.choose(&mut self.rng).unwrap();
                let v = *NEUTRAL_VERBS.choose(&mut self.rng).unwrap();
                let n = self.vocab.ambiguous.choose(&mut self.rng).unwrap().clone();
                self.outside(&[s, v]);
                self.push(&n, Label::O, Label::O);
            }
            _ => {
                let p = *PLAIN.choose(&mut self.rng).unwrap();
                self.outside(p);
            }
        }
    }

    fn review(&mut self) -> LabeledSentence {
        self.tokens.clear();
        self.tags.clear();
        let clauses = self.rng.random_range(1..=3);
        let mut any_opinion = false;
        for c in 0..clauses {
            if c > 0 {
                let j = *JOINERS.choose(&mut self.rng).unwrap();
                self.outside(&[j]);
            }
            // every review carries at least one opinion clause
            let last = c + 1 == clauses;
            if (last && !any_opinion) || self.rng.random_bool(0.6) {
                self.opinion_clause();
                any_opinion = true;
            } else {
                self.neutral_clause();
            }
        }
        LabeledSentence::new(self.tokens.clone(), self.tags.clone()).expect("generator emits aligned tags")
    }

    fn general(&mut self) -> Vec<String> {
        let n = self.rng.random_range(5..=12);
        let mut out: Vec<String> = Vec::with_capacity(n);
        for _ in 0..n {
            let w = if self.rng.random_bool(0.15) {
                // shared words seen in generic contexts
                let vocab = self.vocab;
                let pool: &[String] = match self.rng.random_range(0..2) {
                    0 => &vocab.opinions,
                    _ => &vocab.ambiguous,
                };
                pool.choose(&mut self.rng).unwrap().split(' ').next().unwrap().to_string()
            } else {
                GENERAL_WORDS.choose(&mut self.rng).unwrap().to_string()
            };
            out.push(w);
        }
        out
    }
}

fn stream_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ stream.wrapping_mul(0xd1b5_4a32_d192_ed03)
}

/// Generates the three labeled splits and two raw-text embedding corpora,
/// each from its own seed stream.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    if cfg.sentences < 3 {
        return Err(SynthError::TooSmall(cfg.sentences));
    }
    if !(0.0..=1.0).contains(&cfg.coupling) {
        return Err(SynthError::Coupling(cfg.coupling));
    }
    let vocab = cfg.vocab()?;
    let gen = |stream: u64| Gen {
        rng: ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, stream)),
        vocab: &vocab,
        cfg,
        tokens: Vec::new(),
        tags: Vec::new(),
    };
    let [n_train, n_val, n_test] = cfg.split_sizes();
    let mut splits = Vec::new();
    for (stream, n) in [(1, n_train), (2, n_val), (3, n_test)] {
        let mut g = gen(stream);
        splits.push((0..n).map(|_| g.review()).collect::<Vec<_>>());
    }
    let mut g = gen(4);
    let domain_text = (0..cfg.domain_sentences).map(|_| g.review().tokens().to_vec()).collect();
    let mut g = gen(5);
    let general_text = (0..cfg.general_sentences).map(|_| g.general()).collect();
    let test = splits.pop().unwrap();
    let val = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(SynthCorpus {
        train,
        val,
        test,
        domain_text,
        general_text,
    })
}

pub fn render_text(sentences: &[Vec<String>]) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&s.join(" "));
        out.push('\n');
    }
    out
}

/// Whitespace-tokenized lines of a raw text corpus; blank lines are skipped.
pub fn parse_text(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split_whitespace().map(String::from).collect::<Vec<_>>())
        .filter(|t| !t.is_empty())
        .collect()
}

impl SynthCorpus {
    pub const FILES: [&'static str; 5] = ["train.tsv", "val.tsv", "test.tsv", "domain.txt", "general.txt"];

    /// Writes `train.tsv`, `val.tsv`, `test.tsv`, `domain.txt` and `general.txt`.
    pub fn write(&self, dir: &Path) -> Result<(), SynthError> {
        let io = |p: &Path, e: std::io::Error| SynthError::Io {
            path: p.display().to_string(),
            source: e,
        };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        write_corpus(&self.train, &dir.join("train.tsv"))?;
        write_corpus(&self.val, &dir.join("val.tsv"))?;
        write_corpus(&self.test, &dir.join("test.tsv"))?;
        for (name, text) in [("domain.txt", &self.domain_text), ("general.txt", &self.general_text)] {
            let p = dir.join(name);
            std::fs::write(&p, render_text(text)).map_err(|e| io(&p, e))?;
        }
        Ok(())
    }
}
