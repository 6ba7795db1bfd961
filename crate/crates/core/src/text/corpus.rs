use std::path::Path;

use super::{is_valid_token, Label, LabeledSentence, TextError};

/// Parses the column format: `token<TAB>tag` per line, blank lines between
/// sentences, and `#` lines without a tab as comments.
pub fn parse_corpus(text: &str) -> Result<Vec<LabeledSentence>, TextError> {
    let mut sentences = Vec::new();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let mut flush = |tokens: &mut Vec<String>, tags: &mut Vec<Label>| -> Result<(), TextError> {
        if !tokens.is_empty() {
            sentences.push(LabeledSentence::new(std::mem::take(tokens), std::mem::take(tags))?);
        }
        Ok(())
    };

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            flush(&mut tokens, &mut tags)?;
            continue;
        }
        if line.starts_with('#') && !line.contains('\t') {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(token), Some(tag), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(TextError::Malformed {
                line: line_no,
                found: line.to_string(),
            });
        };
        if !is_valid_token(token) {
            return Err(TextError::Malformed {
                line: line_no,
                found: line.to_string(),
            });
        }
        let label = tag.parse::<Label>().map_err(|_| TextError::UnknownTag {
            line: line_no,
            tag: tag.to_string(),
        })?;
        tokens.push(token.to_string());
        tags.push(label);
    }
    flush(&mut tokens, &mut tags)?;
    Ok(sentences)
}

/// Canonical rendering: every sentence is followed by one blank line.
pub fn render_corpus(sentences: &[LabeledSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        for (tok, tag) in s.tokens().iter().zip(s.tags()) {
            out.push_str(tok);
            out.push('\t');
            out.push_str(tag.as_str());
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

pub fn read_corpus(path: &Path) -> Result<Vec<LabeledSentence>, TextError> {
    let text = std::fs::read_to_string(path).map_err(|source| TextError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text)
}

pub fn write_corpus(sentences: &[LabeledSentence], path: &Path) -> Result<(), TextError> {
    std::fs::write(path, render_corpus(sentences)).map_err(|source| TextError::Io {
        path: path.display().to_string(),
        source,
    })
}
