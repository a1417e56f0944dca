//! Tag-level structure tokenization.
//!
//! Rules: `<thead>`, `</thead>`, `<tbody>`, `</tbody>`, `<tr>`, `</tr>` map to
//! themselves; `<td>…</td>` becomes the single token `<td></td>`;
//! `<td rowspan="2" colspan="3">…</td>` becomes `<td`, ` rowspan="2"`,
//! ` colspan="3"`, `>`, `</td>`. Text between the cell tags is skipped.

use super::{
    is_cell_trigger, parse_span_token, span_token, StructVocab, VocabError, CELL, CELL_CLOSE,
    CELL_OPEN, CELL_OPEN_END,
};

const PLAIN_TAGS: [&str; 6] = [
    "<thead>", "</thead>", "<tbody>", "</tbody>", "<tr>", "</tr>",
];

fn fragment(html: &str, at: usize) -> String {
    let rest = &html[at..];
    let end = rest.find('>').map(|i| i + 1).unwrap_or(rest.len()).min(40);
    rest[..end].to_string()
}

fn unsupported(html: &str, at: usize) -> VocabError {
    VocabError::Unsupported {
        offset: at,
        fragment: fragment(html, at),
    }
}

/// Parses the attribute list of a `<td` opener starting at `pos` (just past
/// `<td`). Returns span tokens in source order and the position after `>`.
fn cell_attributes(
    html: &str,
    mut pos: usize,
    max_span: usize,
) -> Result<(Vec<String>, usize), VocabError> {
    let bytes = html.as_bytes();
    let mut spans = Vec::new();
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        match bytes.get(pos) {
            None => return Err(unsupported(html, pos.min(html.len()))),
            Some(b'>') => return Ok((spans, pos + 1)),
            Some(_) => {}
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_alphabetic() {
            pos += 1;
        }
        let name = &html[start..pos];
        if (name != "rowspan" && name != "colspan") || bytes.get(pos) != Some(&b'=') {
            return Err(unsupported(html, start));
        }
        pos += 1;
        let quote = match bytes.get(pos) {
            Some(&q @ (b'"' | b'\'')) => {
                pos += 1;
                Some(q)
            }
            _ => None,
        };
        let vstart = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        let digits = &html[vstart..pos];
        if let Some(q) = quote {
            if bytes.get(pos) != Some(&q) {
                return Err(unsupported(html, start));
            }
            pos += 1;
        }
        let value: usize = digits.parse().map_err(|_| unsupported(html, start))?;
        if value == 0 {
            return Err(unsupported(html, start));
        }
        if value > max_span {
            return Err(VocabError::SpanTooLarge {
                offset: start,
                value,
                max: max_span,
            });
        }
        if value > 1 {
            spans.push(span_token(name, value));
        }
    }
}

pub(super) fn tokenize(html: &str, max_span: usize) -> Result<Vec<String>, VocabError> {
    let bytes = html.as_bytes();
    let mut out = Vec::new();
    let mut pos = 0;
    'scan: while pos < bytes.len() {
        if bytes[pos].is_ascii_whitespace() {
            pos += 1;
            continue;
        }
        let rest = &html[pos..];
        for tag in PLAIN_TAGS {
            if rest.starts_with(tag) {
                out.push(tag.to_string());
                pos += tag.len();
                continue 'scan;
            }
        }
        let opener = rest.starts_with("<td")
            && matches!(
                bytes.get(pos + 3),
                Some(b'>') | Some(b' ' | b'\t' | b'\n' | b'\r')
            );
        if !opener {
            return Err(unsupported(html, pos));
        }
        let (spans, after) = cell_attributes(html, pos + 3, max_span)?;
        let close = html[after..]
            .find(CELL_CLOSE)
            .ok_or_else(|| unsupported(html, pos))?;
        if spans.is_empty() {
            out.push(CELL.to_string());
        } else {
            out.push(CELL_OPEN.to_string());
            out.extend(spans);
            out.push(CELL_OPEN_END.to_string());
            out.push(CELL_CLOSE.to_string());
        }
        pos = after + close + CELL_CLOSE.len();
    }
    Ok(out)
}

pub(super) fn detokenize<S: AsRef<str>>(
    tokens: &[S],
    vocab: &StructVocab,
) -> Result<String, VocabError> {
    let mut html = String::new();
    let mut open: Option<usize> = None;
    for (index, token) in tokens.iter().enumerate() {
        let token = token.as_ref();
        let fail = |reason| VocabError::IllOrdered {
            index,
            token: token.to_string(),
            reason,
        };
        match vocab.id(token) {
            None => return Err(fail("not a structure token")),
            Some(id) if id < 4 => return Err(fail("special tokens have no markup")),
            Some(_) => {}
        }
        if parse_span_token(token).is_some() {
            if open.is_none() {
                return Err(fail("span attribute outside a `<td` opener"));
            }
            open = open.map(|n| n + 1);
        } else if token == CELL_OPEN_END {
            match open {
                None => return Err(fail("`>` without a `<td` opener")),
                Some(0) => return Err(fail("`<td` opener without span attributes")),
                Some(_) => open = None,
            }
        } else if open.is_some() {
            return Err(fail("tag inside an unfinished `<td` opener"));
        } else if token == CELL_OPEN {
            open = Some(0);
        }
        html.push_str(token);
    }
    if open.is_some() {
        return Err(VocabError::IllOrdered {
            index: tokens.len(),
            token: String::new(),
            reason: "unterminated `<td` opener",
        });
    }
    Ok(html)
}

/// Inserts the i-th content string into the i-th cell of the structure.
pub fn assemble_html<S: AsRef<str>, C: AsRef<str>>(
    tokens: &[S],
    contents: &[C],
) -> Result<String, VocabError> {
    let triggers = tokens
        .iter()
        .filter(|t| is_cell_trigger(t.as_ref()))
        .count();
    if triggers != contents.len() {
        return Err(VocabError::CountMismatch {
            triggers,
            contents: contents.len(),
        });
    }
    let mut html = String::new();
    let mut cell = 0;
    let mut in_opener = false;
    for token in tokens {
        let token = token.as_ref();
        if token == CELL {
            html.push_str("<td>");
            html.push_str(contents[cell].as_ref());
            html.push_str(CELL_CLOSE);
            cell += 1;
        } else if token == CELL_OPEN {
            html.push_str(token);
            in_opener = true;
        } else if token == CELL_OPEN_END && in_opener {
            html.push_str(token);
            html.push_str(contents[cell].as_ref());
            cell += 1;
            in_opener = false;
        } else {
            html.push_str(token);
        }
    }
    Ok(html)
}
