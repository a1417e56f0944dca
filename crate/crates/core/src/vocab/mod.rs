//! Token vocabularies for table structure and cell content, plus the table
//! annotation record shared by the data pipeline and the model.
//!
//! Structure tokens follow the PubTabNet annotation strings byte-for-byte:
//! a plain cell is the single token `<td></td>`, and a spanning cell is
//! broken into `<td`, one or two span attributes such as ` colspan="3"`,
//! `>` and `</td>`. The tokens `<td></td>` and `<td` therefore each open a
//! new cell and are called cell triggers.

mod annotation;
mod html;
mod structure;

use std::collections::HashMap;

pub use annotation::{CellAnnotation, TableAnnotation};
pub use html::{cell_contents, parse_table_tree};
pub use structure::assemble_html;

pub const PAD: &str = "<pad>";
pub const SOS: &str = "<sos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

pub const PAD_ID: usize = 0;
pub const SOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;

/// Largest span value with its own attribute token.
pub const DEFAULT_MAX_SPAN: usize = 10;

pub const CELL: &str = "<td></td>";
pub const CELL_OPEN: &str = "<td";
pub const CELL_OPEN_END: &str = ">";
pub const CELL_CLOSE: &str = "</td>";

const SPECIALS: [&str; 4] = [PAD, SOS, EOS, UNK];
const TAGS: [&str; 10] = [
    "<thead>",
    "</thead>",
    "<tbody>",
    "</tbody>",
    "<tr>",
    "</tr>",
    CELL,
    CELL_OPEN,
    CELL_OPEN_END,
    CELL_CLOSE,
];

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum VocabError {
    #[error("unsupported markup at byte {offset}: {fragment:?}")]
    Unsupported { offset: usize, fragment: String },
    #[error("span {value} at byte {offset} exceeds the maximum of {max}")]
    SpanTooLarge {
        offset: usize,
        value: usize,
        max: usize,
    },
    #[error("token {index} ({token:?}) is out of place: {reason}")]
    IllOrdered {
        index: usize,
        token: String,
        reason: &'static str,
    },
    #[error("structure has {triggers} cells but {contents} contents were given")]
    CountMismatch { triggers: usize, contents: usize },
    #[error("unbalanced markup at byte {position}: {reason}")]
    Unbalanced { position: usize, reason: String },
}

/// True exactly for the two tokens that open a new cell.
pub fn is_cell_trigger(token: &str) -> bool {
    token == CELL || token == CELL_OPEN
}

/// Span attribute token, e.g. `span_token("rowspan", 2)` → ` rowspan="2"`.
pub fn span_token(attr: &str, value: usize) -> String {
    format!(" {attr}=\"{value}\"")
}

/// Parses a span attribute token back into `(attribute, value)`.
pub fn parse_span_token(token: &str) -> Option<(&'static str, usize)> {
    for attr in ["rowspan", "colspan"] {
        if let Some(rest) = token.strip_prefix(' ').and_then(|t| t.strip_prefix(attr)) {
            let v = rest.strip_prefix("=\"")?.strip_suffix('"')?;
            if v.is_empty() || !v.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            return v.parse().ok().map(|n| (attr, n));
        }
    }
    None
}

fn index_of(tokens: &[String]) -> HashMap<String, usize> {
    tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect()
}

/// Structure-token inventory: specials, tags, then span attributes.
#[derive(Clone, Debug)]
pub struct StructVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    max_span: usize,
}

impl Default for StructVocab {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_SPAN)
    }
}

impl StructVocab {
    pub fn new(max_span: usize) -> Self {
        let mut tokens: Vec<String> = SPECIALS
            .iter()
            .chain(&TAGS)
            .map(|s| s.to_string())
            .collect();
        for attr in ["rowspan", "colspan"] {
            for k in 2..=max_span {
                tokens.push(span_token(attr, k));
            }
        }
        let index = index_of(&tokens);
        Self {
            tokens,
            index,
            max_span,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn max_span(&self) -> usize {
        self.max_span
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Ids for a token list; unknown tokens map to UNK.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(UNK_ID))
            .collect()
    }

    pub fn is_trigger_id(&self, id: usize) -> bool {
        self.token(id).is_some_and(is_cell_trigger)
    }
}

/// Character-level content inventory: specials then printable ASCII.
#[derive(Clone, Debug)]
pub struct ContentVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for ContentVocab {
    fn default() -> Self {
        let tokens: Vec<String> = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain((0x20u8..=0x7e).map(|b| (b as char).to_string()))
            .collect();
        let index = index_of(&tokens);
        Self { tokens, index }
    }
}

impl ContentVocab {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(UNK_ID))
            .collect()
    }

    /// Characters for ids, skipping specials.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| i >= SPECIALS.len())
            .filter_map(|&i| self.token(i))
            .collect()
    }
}

/// Splits text into one token per character.
pub fn tokenize_content(text: &str) -> Vec<String> {
    text.chars().map(String::from).collect()
}

pub fn detokenize_content<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens.iter().map(AsRef::as_ref).collect()
}

impl StructVocab {
    /// Tokenizes a table-body HTML fragment (see [`structure`] rules); cell
    /// text between `<td ...>` and `</td>` is skipped.
    pub fn tokenize(&self, html: &str) -> Result<Vec<String>, VocabError> {
        structure::tokenize(html, self.max_span)
    }

    /// Concatenates tokens back into HTML, rejecting misplaced span tokens.
    pub fn detokenize<S: AsRef<str>>(&self, tokens: &[S]) -> Result<String, VocabError> {
        structure::detokenize(tokens, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn struct_vocab_layout() {
        let v = StructVocab::default();
        assert_eq!(v.len(), 32);
        assert_eq!(v.id(PAD), Some(PAD_ID));
        assert_eq!(v.id(SOS), Some(SOS_ID));
        assert_eq!(v.id(EOS), Some(EOS_ID));
        assert_eq!(v.id(UNK), Some(UNK_ID));
        assert_eq!(v.id(" rowspan=\"2\""), Some(14));
        assert_eq!(v.id(" colspan=\"10\""), Some(31));
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(t), Some(i));
        }
        let triggers: Vec<&String> = v.tokens().iter().filter(|t| is_cell_trigger(t)).collect();
        assert_eq!(triggers, [CELL, CELL_OPEN]);
    }

    #[test]
    fn trigger_classification() {
        assert!(is_cell_trigger("<td></td>"));
        assert!(is_cell_trigger("<td"));
        assert!(!is_cell_trigger("<tr>"));
        assert!(!is_cell_trigger("</td>"));
        assert!(!is_cell_trigger(">"));
    }

    #[test]
    fn content_vocab_is_bijective_and_covers_ascii() {
        let v = ContentVocab::default();
        assert_eq!(v.len(), 4 + 95);
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(t), Some(i));
        }
        assert_eq!(v.encode(&["é"]), vec![UNK_ID]);
    }

    #[test]
    fn content_tokenization() {
        assert_eq!(tokenize_content("9.5"), ["9", ".", "5"]);
        assert!(tokenize_content("").is_empty());
        assert_eq!(detokenize_content(&tokenize_content("a b%")), "a b%");
    }

    #[test]
    fn span_token_parsing() {
        assert_eq!(parse_span_token(" rowspan=\"2\""), Some(("rowspan", 2)));
        assert_eq!(parse_span_token(" colspan=\"12\""), Some(("colspan", 12)));
        assert_eq!(parse_span_token("rowspan=\"2\""), None);
        assert_eq!(parse_span_token(" colspan=\"x\""), None);
    }
}
