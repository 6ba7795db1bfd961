//! Tokens, BIO tags and the column corpus format.

mod corpus;
mod preprocess;

pub use corpus::{parse_corpus, read_corpus, render_corpus, write_corpus};
pub use preprocess::{preprocess, tokenize, NormalizationLexicon};

use std::fmt;
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("line {line}: unknown tag {tag:?}")]
    UnknownTag { line: usize, tag: String },
    #[error("line {line}: expected `token<TAB>tag`, found {found:?}")]
    Malformed { line: usize, found: String },
    #[error("line {line}: duplicate lexicon entry {key:?}")]
    DuplicateLexiconKey { line: usize, key: String },
    #[error("line {line}: empty lexicon value for {key:?}")]
    EmptyLexiconValue { line: usize, key: String },
    #[error("spans {first:?} and {second:?} overlap")]
    OverlappingSpans { first: EntitySpan, second: EntitySpan },
    #[error("span {span:?} outside a sentence of length {length}")]
    SpanOutOfBounds { span: EntitySpan, length: usize },
    #[error("sentence has {tokens} tokens but {tags} tags")]
    LengthMismatch { tokens: usize, tags: usize },
    #[error("invalid token {0:?}: tokens must be non-empty and free of whitespace")]
    InvalidToken(String),
    #[error("empty sentence")]
    EmptySentence,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The five token labels. Discriminants are the classifier's class indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    BAspect = 0,
    IAspect = 1,
    BSentiment = 2,
    ISentiment = 3,
    O = 4,
}

impl Label {
    pub const COUNT: usize = 5;
    pub const ALL: [Label; 5] = [
        Label::BAspect,
        Label::IAspect,
        Label::BSentiment,
        Label::ISentiment,
        Label::O,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Label> {
        Label::ALL.get(code).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::BAspect => "B-ASPECT",
            Label::IAspect => "I-ASPECT",
            Label::BSentiment => "B-SENTIMENT",
            Label::ISentiment => "I-SENTIMENT",
            Label::O => "O",
        }
    }

    pub fn kind(self) -> Option<EntityKind> {
        match self {
            Label::BAspect | Label::IAspect => Some(EntityKind::Aspect),
            Label::BSentiment | Label::ISentiment => Some(EntityKind::Sentiment),
            Label::O => None,
        }
    }

    pub fn is_begin(self) -> bool {
        matches!(self, Label::BAspect | Label::BSentiment)
    }

    pub fn begin(kind: EntityKind) -> Label {
        match kind {
            EntityKind::Aspect => Label::BAspect,
            EntityKind::Sentiment => Label::BSentiment,
        }
    }

    pub fn inside(kind: EntityKind) -> Label {
        match kind {
            EntityKind::Aspect => Label::IAspect,
            EntityKind::Sentiment => Label::ISentiment,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::ALL.into_iter().find(|l| l.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityKind {
    Aspect,
    Sentiment,
}

impl EntityKind {
    pub const ALL: [EntityKind; 2] = [EntityKind::Aspect, EntityKind::Sentiment];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Aspect => "ASPECT",
            EntityKind::Sentiment => "SENTIMENT",
        }
    }
}

/// A term occupying tokens `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntitySpan {
    pub kind: EntityKind,
    pub start: usize,
    pub end: usize,
}

impl EntitySpan {
    pub fn new(kind: EntityKind, start: usize, end: usize) -> Self {
        EntitySpan { kind, start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSentence {
    tokens: Vec<String>,
    tags: Vec<Label>,
}

impl LabeledSentence {
    pub fn new(tokens: Vec<String>, tags: Vec<Label>) -> Result<Self, TextError> {
        if tokens.len() != tags.len() {
            return Err(TextError::LengthMismatch {
                tokens: tokens.len(),
                tags: tags.len(),
            });
        }
        if tokens.is_empty() {
            return Err(TextError::EmptySentence);
        }
        if let Some(bad) = tokens.iter().find(|t| !is_valid_token(t)) {
            return Err(TextError::InvalidToken(bad.clone()));
        }
        Ok(LabeledSentence { tokens, tags })
    }

    /// Sentence whose tags are all `O`, used for unlabeled prediction input.
    pub fn unlabeled(tokens: Vec<String>) -> Result<Self, TextError> {
        let tags = vec![Label::O; tokens.len()];
        LabeledSentence::new(tokens, tags)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn tags(&self) -> &[Label] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn with_tags(&self, tags: Vec<Label>) -> Result<Self, TextError> {
        LabeledSentence::new(self.tokens.clone(), tags)
    }

    pub fn spans(&self) -> Vec<EntitySpan> {
        decode_bio(&self.tags)
    }
}

pub(crate) fn is_valid_token(t: &str) -> bool {
    !t.is_empty() && !t.chars().any(char::is_whitespace)
}

/// Extracts maximal entity spans. An `I-X` without a preceding tag of kind X
/// opens a new span rather than being dropped.
pub fn decode_bio(tags: &[Label]) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut open: Option<(EntityKind, usize)> = None;
    for (i, &tag) in tags.iter().enumerate() {
        let continues = match (open, tag.kind()) {
            (Some((k, _)), Some(kind)) => k == kind && !tag.is_begin(),
            _ => false,
        };
        if continues {
            continue;
        }
        if let Some((kind, start)) = open.take() {
            spans.push(EntitySpan::new(kind, start, i));
        }
        if let Some(kind) = tag.kind() {
            open = Some((kind, i));
        }
    }
    if let Some((kind, start)) = open {
        spans.push(EntitySpan::new(kind, start, tags.len()));
    }
    spans
}

/// Renders spans as BIO tags over `length` tokens.
pub fn encode_bio(length: usize, spans: &[EntitySpan]) -> Result<Vec<Label>, TextError> {
    let mut sorted = spans.to_vec();
    sorted.sort_by_key(|s| (s.start, s.end));
    for s in &sorted {
        if s.is_empty() || s.end > length {
            return Err(TextError::SpanOutOfBounds { span: *s, length });
        }
    }
    for pair in sorted.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(TextError::OverlappingSpans {
                first: pair[0],
                second: pair[1],
            });
        }
    }
    let mut tags = vec![Label::O; length];
    for s in &sorted {
        tags[s.start] = Label::begin(s.kind);
        for t in &mut tags[s.start + 1..s.end] {
            *t = Label::inside(s.kind);
        }
    }
    Ok(tags)
}
