//! Normalization of emitted structure tokens into well-formed markup.
//!
//! Misplaced tokens are dropped and missing closers are inserted, so the
//! output always detokenizes and parses. Cell triggers are never removed or
//! added: a `<td` opener without span attributes becomes `<td></td>`.

use crate::vocab::{parse_span_token, CELL, CELL_CLOSE, CELL_OPEN, CELL_OPEN_END};

#[derive(Default)]
struct State {
    out: Vec<String>,
    section: Option<&'static str>,
    in_row: bool,
    /// Index in `out` of an unfinished `<td` and its span count.
    opener: Option<(usize, usize)>,
    awaiting_close: bool,
    edits: usize,
}

impl State {
    fn push(&mut self, t: &str) {
        self.out.push(t.to_string());
    }

    fn insert(&mut self, t: &str) {
        self.push(t);
        self.edits += 1;
    }

    fn finish_cell(&mut self) {
        if let Some((at, spans)) = self.opener.take() {
            if spans == 0 {
                self.out[at] = CELL.to_string();
                self.edits += 1;
            } else {
                self.insert(CELL_OPEN_END);
                self.insert(CELL_CLOSE);
            }
        }
        if self.awaiting_close {
            self.insert(CELL_CLOSE);
            self.awaiting_close = false;
        }
    }

    fn finish_row(&mut self) {
        self.finish_cell();
        if self.in_row {
            self.insert("</tr>");
            self.in_row = false;
        }
    }

    fn finish_section(&mut self) {
        self.finish_row();
        if let Some(s) = self.section.take() {
            self.insert(if s == "thead" { "</thead>" } else { "</tbody>" });
        }
    }
}

/// Returns the repaired tokens and the number of tokens dropped, inserted
/// or rewritten. Trigger tokens keep their order and count.
pub fn repair_structure<S: AsRef<str>>(tokens: &[S]) -> (Vec<String>, usize) {
    let mut s = State::default();
    for t in tokens {
        let t = t.as_ref();
        match t {
            "<thead>" | "<tbody>" => {
                s.finish_section();
                s.push(t);
                s.section = Some(if t == "<thead>" { "thead" } else { "tbody" });
            }
            "</thead>" | "</tbody>" => {
                let name = &t[2..t.len() - 1];
                if s.section == Some(name) {
                    s.finish_row();
                    s.push(t);
                    s.section = None;
                } else {
                    s.edits += 1;
                }
            }
            "<tr>" => {
                s.finish_row();
                s.push(t);
                s.in_row = true;
            }
            "</tr>" => {
                if s.in_row {
                    s.finish_cell();
                    s.push(t);
                    s.in_row = false;
                } else {
                    s.edits += 1;
                }
            }
            CELL | CELL_OPEN => {
                s.finish_cell();
                if !s.in_row {
                    s.insert("<tr>");
                    s.in_row = true;
                }
                s.push(t);
                if t == CELL_OPEN {
                    s.opener = Some((s.out.len() - 1, 0));
                }
            }
            CELL_OPEN_END => match s.opener {
                Some((_, n)) if n > 0 => {
                    s.push(t);
                    s.opener = None;
                    s.awaiting_close = true;
                }
                Some((at, _)) => {
                    s.out[at] = CELL.to_string();
                    s.opener = None;
                    s.edits += 2;
                }
                None => s.edits += 1,
            },
            CELL_CLOSE => {
                if s.awaiting_close {
                    s.push(t);
                    s.awaiting_close = false;
                } else {
                    s.edits += 1;
                }
            }
            _ if parse_span_token(t).is_some() => match &mut s.opener {
                Some((_, n)) => {
                    *n += 1;
                    s.push(t);
                }
                None => s.edits += 1,
            },
            _ => s.edits += 1,
        }
    }
    s.finish_section();
    (s.out, s.edits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_formed_input_is_untouched() {
        let t = [
            "<thead>",
            "<tr>",
            "<td",
            " colspan=\"2\"",
            ">",
            "</td>",
            "</tr>",
            "</thead>",
            "<tbody>",
            "<tr>",
            "<td></td>",
            "<td></td>",
            "</tr>",
            "</tbody>",
        ];
        let (out, edits) = repair_structure(&t);
        assert_eq!(out, t);
        assert_eq!(edits, 0);
    }

    #[test]
    fn drops_orphans_and_closes_openers() {
        let (out, edits) = repair_structure(&[
            " colspan=\"2\"",
            "<tr>",
            "<td",
            ">",
            "<td",
            " rowspan=\"3\"",
            "</tr>",
        ]);
        assert_eq!(
            out,
            [
                "<tr>",
                "<td></td>",
                "<td",
                " rowspan=\"3\"",
                ">",
                "</td>",
                "</tr>"
            ]
        );
        assert_eq!(edits, 1 + 2 + 2);
        let (out, _) = repair_structure(&["<td></td>", "</tbody>"]);
        assert_eq!(out, ["<tr>", "<td></td>", "</tr>"]);
    }
}
