//! Recursive-descent parser for the closed table tag set
//! (`table`, `thead`, `tbody`, `tr`, `td`).

use super::VocabError;
use crate::eval::{TableNode, TableTree};

const STRUCTURAL: [&str; 5] = ["table", "thead", "tbody", "tr", "td"];

struct Parser<'a> {
    html: &'a str,
    pos: usize,
}

enum Tag<'a> {
    Open { name: &'a str, attrs: &'a str },
    Close(&'a str),
}

impl<'a> Parser<'a> {
    fn unbalanced(&self, position: usize, reason: impl Into<String>) -> VocabError {
        VocabError::Unbalanced {
            position,
            reason: reason.into(),
        }
    }

    fn skip_ws(&mut self) {
        let rest = &self.html[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn at_end(&self) -> bool {
        self.pos >= self.html.len()
    }

    /// Reads one tag at the cursor.
    fn tag(&mut self) -> Result<Tag<'a>, VocabError> {
        let start = self.pos;
        let html = self.html;
        if !html[start..].starts_with('<') {
            return Err(VocabError::Unsupported {
                offset: start,
                fragment: html[start..].chars().take(20).collect(),
            });
        }
        let end = html[start..]
            .find('>')
            .map(|i| start + i)
            .ok_or_else(|| self.unbalanced(start, "tag never closed"))?;
        self.pos = end + 1;
        let inner = &html[start + 1..end];
        let (closing, inner) = match inner.strip_prefix('/') {
            Some(rest) => (true, rest),
            None => (false, inner),
        };
        let split = inner
            .find(|c: char| c.is_ascii_whitespace())
            .unwrap_or(inner.len());
        let name = &inner[..split];
        if !STRUCTURAL.contains(&name) {
            return Err(VocabError::Unsupported {
                offset: start,
                fragment: html[start..=end].to_string(),
            });
        }
        Ok(if closing {
            Tag::Close(name)
        } else {
            Tag::Open {
                name,
                attrs: &inner[split..],
            }
        })
    }

    /// Parses children until the closing tag of `parent`; returns them.
    fn children(&mut self, parent: &str, opened_at: usize) -> Result<Vec<TableNode>, VocabError> {
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            if self.at_end() {
                return Err(self.unbalanced(opened_at, format!("<{parent}> is never closed")));
            }
            let at = self.pos;
            match self.tag()? {
                Tag::Close(name) if name == parent => return Ok(out),
                Tag::Close(name) => {
                    return Err(self.unbalanced(at, format!("</{name}> closes <{parent}>")));
                }
                Tag::Open { name, attrs } => out.push(self.element(name, attrs, at)?),
            }
        }
    }

    fn element(&mut self, name: &str, attrs: &str, at: usize) -> Result<TableNode, VocabError> {
        if name == "td" {
            let body_start = self.pos;
            let rel = self.html[body_start..]
                .find("</td>")
                .ok_or_else(|| self.unbalanced(at, "<td> is never closed"))?;
            let body = &self.html[body_start..body_start + rel];
            if let Some(i) = body.find("<td") {
                return Err(self.unbalanced(body_start + i, "<td> opened inside a cell"));
            }
            self.pos = body_start + rel + "</td>".len();
            let (rowspan, colspan) = spans(attrs);
            return Ok(TableNode::cell(body.trim(), rowspan, colspan));
        }
        let children = self.children(name, at)?;
        Ok(TableNode::new(name).with_children(children))
    }
}

fn spans(attrs: &str) -> (u32, u32) {
    let read = |key: &str| -> u32 {
        let Some(i) = attrs.find(key) else { return 1 };
        let rest = attrs[i + key.len()..].trim_start();
        let Some(rest) = rest.strip_prefix('=') else {
            return 1;
        };
        let rest = rest.trim_start().trim_start_matches(['"', '\'']);
        let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
        digits.parse().ok().filter(|&v| v >= 1).unwrap_or(1)
    };
    (read("rowspan"), read("colspan"))
}

/// Parses table HTML into an ordered tree. A fragment without an outer
/// `<table>` (such as assembled decoder output) is wrapped in one.
pub fn parse_table_tree(html: &str) -> Result<TableTree, VocabError> {
    let mut p = Parser { html, pos: 0 };
    let mut top = Vec::new();
    loop {
        p.skip_ws();
        if p.at_end() {
            break;
        }
        let at = p.pos;
        match p.tag()? {
            Tag::Close(name) => return Err(p.unbalanced(at, format!("</{name}> without opener"))),
            Tag::Open { name, attrs } => top.push(p.element(name, attrs, at)?),
        }
    }
    let root = if top.len() == 1 && top[0].tag == "table" {
        top.pop().unwrap()
    } else {
        TableNode::new("table").with_children(top)
    };
    Ok(TableTree::new(root))
}

/// Cell texts in document order.
pub fn cell_contents(html: &str) -> Result<Vec<String>, VocabError> {
    let tree = parse_table_tree(html)?;
    Ok(tree
        .preorder()
        .filter(|n| n.tag == "td")
        .map(|n| n.content.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nested_table() {
        let t = parse_table_tree("<table><tr><td>a</td></tr></table>").unwrap();
        assert_eq!(t.root.tag, "table");
        let tr = &t.root.children[0];
        assert_eq!(tr.tag, "tr");
        let td = &tr.children[0];
        assert_eq!(
            (td.tag.as_str(), td.content.as_str(), td.rowspan, td.colspan),
            ("td", "a", 1, 1)
        );
        assert_eq!(t.size(), 3);
    }

    #[test]
    fn reads_span_attributes() {
        let t = parse_table_tree("<tr><td colspan=\"2\">x</td><td rowspan='3'></td></tr>").unwrap();
        let tr = &t.root.children[0];
        assert_eq!(tr.children[0].colspan, 2);
        assert_eq!(tr.children[1].rowspan, 3);
    }

    #[test]
    fn rejects_unbalanced_markup() {
        assert!(matches!(
            parse_table_tree("<tr><td>"),
            Err(VocabError::Unbalanced { .. })
        ));
        assert!(matches!(
            parse_table_tree("<tr></tbody>"),
            Err(VocabError::Unbalanced { position: 4, .. })
        ));
        assert!(matches!(
            parse_table_tree("<tr>"),
            Err(VocabError::Unbalanced { position: 0, .. })
        ));
        assert!(parse_table_tree("</tr>").is_err());
    }

    #[test]
    fn keeps_inline_markup_as_content() {
        let c = cell_contents("<tr><td><b>1</b></td><td></td></tr>").unwrap();
        assert_eq!(c, ["<b>1</b>", ""]);
    }
}
