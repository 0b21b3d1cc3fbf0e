//! Emoticon transcription table: maps common variants onto one canonical
//! form, e.g. `:-)` to `:)`.

use std::sync::LazyLock;

use aho_corasick::{AhoCorasick, AhoCorasickBuilder, MatchKind};

const BUILTIN: &[(&str, &str)] = &[
    (":-)", ":)"),
    (":o)", ":)"),
    (":-]", ":)"),
    (":]", ":)"),
    ("=)", ":)"),
    (":-(", ":("),
    (":[", ":("),
    ("=(", ":("),
    (":'-(", ":'("),
    (":-D", ":D"),
    ("=D", ":D"),
    (";-)", ";)"),
    (":-P", ":P"),
    (":-p", ":P"),
    (":p", ":P"),
    (":-O", ":O"),
    (":-o", ":O"),
    (":-*", ":*"),
    (":-/", ":/"),
    (":-|", ":|"),
];

#[derive(Debug, thiserror::Error)]
pub enum EmoticonTableError {
    #[error("line {0}: expected `variant<TAB>canonical`")]
    Syntax(usize),
    #[error("empty emoticon variant")]
    EmptyVariant,
    #[error(transparent)]
    Build(#[from] aho_corasick::BuildError),
}

/// Variant-to-canonical emoticon mapping, matched longest-first.
#[derive(Debug, Clone)]
pub struct EmoticonTable {
    pairs: Vec<(String, String)>,
    matcher: AhoCorasick,
}

static DEFAULT_TABLE: LazyLock<EmoticonTable> = LazyLock::new(|| {
    EmoticonTable::new(BUILTIN.iter().map(|(a, b)| (a.to_string(), b.to_string()))).expect("built-in table")
});

impl EmoticonTable {
    pub fn builtin() -> &'static EmoticonTable {
        &DEFAULT_TABLE
    }

    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self, EmoticonTableError> {
        let pairs: Vec<(String, String)> = pairs.into_iter().collect();
        if pairs.iter().any(|(v, _)| v.is_empty()) {
            return Err(EmoticonTableError::EmptyVariant);
        }
        let matcher = AhoCorasickBuilder::new()
            .match_kind(MatchKind::LeftmostLongest)
            .build(pairs.iter().map(|(v, _)| v.as_str()))?;
        Ok(EmoticonTable { pairs, matcher })
    }

    /// Reads a table file: one `variant<TAB>canonical` pair per line, `#`
    /// comments allowed.
    pub fn parse(text: &str) -> Result<Self, EmoticonTableError> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (variant, canonical) = line.split_once('\t').ok_or(EmoticonTableError::Syntax(i + 1))?;
            pairs.push((variant.to_string(), canonical.to_string()));
        }
        Self::new(pairs)
    }

    /// Builtin table extended with extra pairs.
    pub fn with_extra(extra: impl IntoIterator<Item = (String, String)>) -> Result<Self, EmoticonTableError> {
        let mut pairs: Vec<(String, String)> = BUILTIN.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        pairs.extend(extra);
        Self::new(pairs)
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn normalize(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        let mut last = 0;
        let mut pos = 0;
        while pos < text.len() {
            let Some(m) = self.matcher.find(aho_corasick::Input::new(text).span(pos..text.len())) else {
                break;
            };
            let variant = &text[m.range()];
            // Variants that end in a letter (":p", ":-D") must not run into a word.
            let glued = variant.ends_with(|c: char| c.is_alphanumeric())
                && text[m.end()..].starts_with(|c: char| c.is_alphanumeric());
            if glued {
                pos = m.start() + text[m.start()..].chars().next().map_or(1, char::len_utf8);
                continue;
            }
            out.push_str(&text[last..m.start()]);
            out.push_str(&self.pairs[m.pattern().as_usize()].1);
            last = m.end();
            pos = m.end();
        }
        out.push_str(&text[last..]);
        out
    }
}

/// Normalizes emoticons with the built-in table.
pub fn normalize_emoticons(text: &str) -> String {
    EmoticonTable::builtin().normalize(text)
}
