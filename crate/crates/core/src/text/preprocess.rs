use std::collections::HashMap;
use std::path::Path;

use super::TextError;

/// Characters split off the edges of whitespace-delimited chunks.
const EDGE_PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':', '(', ')', '"', '\''];

/// Informal → formal word mapping, applied after casefolding.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NormalizationLexicon {
    entries: HashMap<String, String>,
}

impl NormalizationLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I, K, V>(pairs: I) -> Result<Self, TextError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut lex = NormalizationLexicon::new();
        for (i, (k, v)) in pairs.into_iter().enumerate() {
            lex.insert(i + 1, k.into(), v.into())?;
        }
        Ok(lex)
    }

    fn insert(&mut self, line: usize, key: String, value: String) -> Result<(), TextError> {
        let key = key.trim().to_lowercase();
        let value = value.trim().to_lowercase();
        if value.is_empty() {
            return Err(TextError::EmptyLexiconValue { line, key });
        }
        if self.entries.contains_key(&key) {
            return Err(TextError::DuplicateLexiconKey { line, key });
        }
        self.entries.insert(key, value);
        Ok(())
    }

    /// Parses `informal<TAB>formal` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, TextError> {
        let mut lex = NormalizationLexicon::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('\t') else {
                return Err(TextError::Malformed {
                    line: line_no,
                    found: line.to_string(),
                });
            };
            lex.insert(line_no, k.to_string(), v.to_string())?;
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self, TextError> {
        let text = std::fs::read_to_string(path).map_err(|source| TextError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, word: &str) -> Option<&str> {
        self.entries.get(word).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Whitespace split with edge punctuation detached as one-character tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut lead = Vec::new();
        let mut rest = chunk;
        while let Some(c) = rest.chars().next().filter(|c| EDGE_PUNCTUATION.contains(c)) {
            lead.push(c.to_string());
            rest = &rest[c.len_utf8()..];
        }
        let mut trail = Vec::new();
        while let Some(c) = rest.chars().next_back().filter(|c| EDGE_PUNCTUATION.contains(c)) {
            trail.push(c.to_string());
            rest = &rest[..rest.len() - c.len_utf8()];
        }
        tokens.extend(lead);
        if !rest.is_empty() {
            tokens.push(rest.to_string());
        }
        tokens.extend(trail.into_iter().rev());
    }
    tokens
}

/// Casefolds, tokenizes, then replaces each token found in the lexicon.
/// Multi-word lexicon values expand into several tokens.
pub fn preprocess(raw: &str, lexicon: &NormalizationLexicon) -> Vec<String> {
    tokenize(&raw.to_lowercase())
        .into_iter()
        .flat_map(|tok| match lexicon.get(&tok) {
            Some(formal) => formal.split_whitespace().map(str::to_string).collect(),
            None => vec![tok],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn worked_normalization_example() {
        let lex = NormalizationLexicon::from_pairs([("gak", "tidak"), ("dn", "dan")]).unwrap();
        assert_eq!(
            preprocess("Kamar mandi mampet gak ada handuk dn sabun.", &lex),
            toks(&["kamar", "mandi", "mampet", "tidak", "ada", "handuk", "dan", "sabun", "."])
        );
    }

    #[test]
    fn empty_and_punctuation_only_cases() {
        let lex = NormalizationLexicon::new();
        assert!(preprocess("", &lex).is_empty());
        assert_eq!(preprocess("Bersih.", &lex), toks(&["bersih", "."]));
        assert_eq!(preprocess("(bagus!)", &lex), toks(&["(", "bagus", "!", ")"]));
        assert_eq!(preprocess("...", &lex), toks(&[".", ".", "."]));
    }

    #[test]
    fn inner_punctuation_is_kept() {
        let lex = NormalizationLexicon::new();
        assert_eq!(preprocess("lengket-lengket 3.5", &lex), toks(&["lengket-lengket", "3.5"]));
    }

    #[test]
    fn multiword_values_expand() {
        let lex = NormalizationLexicon::from_pairs([("gpp", "tidak apa apa")]).unwrap();
        assert_eq!(preprocess("gpp", &lex), toks(&["tidak", "apa", "apa"]));
    }

    #[test]
    fn lexicon_parse_rules() {
        let lex = NormalizationLexicon::parse("# header\ngak\ttidak\n\nBrsh\tbersih\n").unwrap();
        assert_eq!(lex.len(), 2);
        assert_eq!(lex.get("brsh"), Some("bersih"));
        assert!(matches!(
            NormalizationLexicon::parse("a\tb\na\tc"),
            Err(TextError::DuplicateLexiconKey { line: 2, .. })
        ));
        assert!(matches!(
            NormalizationLexicon::parse("a\t "),
            Err(TextError::EmptyLexiconValue { line: 1, .. })
        ));
        assert!(matches!(
            NormalizationLexicon::parse("no tab here"),
            Err(TextError::Malformed { line: 1, .. })
        ));
    }
}
