//! Random table layouts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::font::ALPHABET;
use crate::vocab::{span_token, CELL, CELL_CLOSE, CELL_OPEN, CELL_OPEN_END, DEFAULT_MAX_SPAN};

/// Ruling of the rendered table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LineStyle {
    /// Every cell boundary is drawn.
    FullGrid,
    /// Horizontal boundaries only.
    Horizontal,
}

/// Generator bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub image_h: usize,
    pub image_w: usize,
    pub channels: usize,
    pub min_rows: usize,
    pub max_rows: usize,
    pub min_cols: usize,
    pub max_cols: usize,
    pub span_prob: f64,
    pub empty_prob: f64,
    pub header_prob: f64,
    pub full_grid_prob: f64,
    pub max_span: usize,
    pub max_text_len: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl GenConfig {
    /// 160×160 grayscale, at most 6×6 cells.
    pub fn desk() -> Self {
        Self {
            image_h: 160,
            image_w: 160,
            channels: 1,
            min_rows: 2,
            max_rows: 6,
            min_cols: 2,
            max_cols: 6,
            span_prob: 0.15,
            empty_prob: 0.1,
            header_prob: 0.7,
            full_grid_prob: 0.8,
            max_span: 4,
            max_text_len: 6,
        }
    }

    /// 480×480 RGB pages with larger grids.
    pub fn paper_geometry() -> Self {
        Self {
            image_h: 480,
            image_w: 480,
            channels: 3,
            max_rows: 20,
            max_cols: 10,
            max_span: DEFAULT_MAX_SPAN,
            max_text_len: 10,
            ..Self::desk()
        }
    }

    pub fn profile(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "paper-geometry" => Some(Self::paper_geometry()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(msg.to_string()) };
        check(
            self.min_rows >= 1 && self.min_rows <= self.max_rows,
            "need 1 <= min_rows <= max_rows",
        )?;
        check(
            self.min_cols >= 1 && self.min_cols <= self.max_cols,
            "need 1 <= min_cols <= max_cols",
        )?;
        check(
            self.channels == 1 || self.channels == 3,
            "channels must be 1 or 3",
        )?;
        for (p, name) in [
            (self.span_prob, "span_prob"),
            (self.empty_prob, "empty_prob"),
            (self.header_prob, "header_prob"),
            (self.full_grid_prob, "full_grid_prob"),
        ] {
            check(
                (0.0..=1.0).contains(&p),
                &format!("{name} must lie in [0, 1]"),
            )?;
        }
        check(
            (1..=DEFAULT_MAX_SPAN).contains(&self.max_span),
            "max_span must lie in 1..=10",
        )?;
        check(self.max_text_len >= 1, "max_text_len must be positive")?;
        let (rh, cw) = super::render::min_cell_extent();
        check(
            self.max_rows * rh + 2 * super::render::MARGIN < self.image_h,
            "max_rows does not fit the image height",
        )?;
        check(
            self.max_cols * cw + 2 * super::render::MARGIN < self.image_w,
            "max_cols does not fit the image width",
        )
    }
}

/// One cell anchored at `(row, col)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecCell {
    pub row: usize,
    pub col: usize,
    pub rowspan: usize,
    pub colspan: usize,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSpec {
    pub rows: usize,
    pub cols: usize,
    pub header_rows: usize,
    /// Cells in row-major anchor order.
    pub cells: Vec<SpecCell>,
    pub style: LineStyle,
    pub seed: u64,
}

impl TableSpec {
    /// Checks that the cells tile the grid exactly and stay on one side of
    /// the header boundary.
    pub fn validate(&self, max_span: usize) -> Result<(), String> {
        let mut owner = vec![usize::MAX; self.rows * self.cols];
        for (i, c) in self.cells.iter().enumerate() {
            if c.rowspan == 0 || c.colspan == 0 || c.rowspan > max_span || c.colspan > max_span {
                return Err(format!("cell {i} has span {}x{}", c.rowspan, c.colspan));
            }
            if c.row + c.rowspan > self.rows || c.col + c.colspan > self.cols {
                return Err(format!("cell {i} leaves the grid"));
            }
            if c.row < self.header_rows && c.row + c.rowspan > self.header_rows {
                return Err(format!("cell {i} crosses the header boundary"));
            }
            if !c.text.chars().all(|ch| ALPHABET.contains(ch)) {
                return Err(format!("cell {i} text {:?} leaves the alphabet", c.text));
            }
            for r in c.row..c.row + c.rowspan {
                for k in c.col..c.col + c.colspan {
                    if owner[r * self.cols + k] != usize::MAX {
                        return Err(format!(
                            "cell {i} overlaps cell {}",
                            owner[r * self.cols + k]
                        ));
                    }
                    owner[r * self.cols + k] = i;
                }
            }
        }
        if let Some(p) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(format!(
                "grid slot ({}, {}) is uncovered",
                p / self.cols,
                p % self.cols
            ));
        }
        let order: Vec<(usize, usize)> = self.cells.iter().map(|c| (c.row, c.col)).collect();
        if order.windows(2).any(|w| w[0] >= w[1]) {
            return Err("cells are not in row-major order".into());
        }
        Ok(())
    }

    pub fn is_complex(&self) -> bool {
        self.cells.iter().any(|c| c.rowspan > 1 || c.colspan > 1)
    }

    /// Structure tokens for the given cell layout.
    pub fn structure_tokens(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut cells = self.cells.iter().peekable();
        for r in 0..self.rows {
            if r == 0 && self.header_rows > 0 {
                out.push("<thead>".to_string());
            }
            if r == self.header_rows {
                out.push("<tbody>".to_string());
            }
            out.push("<tr>".to_string());
            while let Some(c) = cells.next_if(|c| c.row == r) {
                if c.rowspan == 1 && c.colspan == 1 {
                    out.push(CELL.to_string());
                    continue;
                }
                out.push(CELL_OPEN.to_string());
                if c.rowspan > 1 {
                    out.push(span_token("rowspan", c.rowspan));
                }
                if c.colspan > 1 {
                    out.push(span_token("colspan", c.colspan));
                }
                out.push(CELL_OPEN_END.to_string());
                out.push(CELL_CLOSE.to_string());
            }
            out.push("</tr>".to_string());
            if r + 1 == self.header_rows {
                out.push("</thead>".to_string());
            }
        }
        if self.header_rows < self.rows {
            out.push("</tbody>".to_string());
        }
        out
    }
}

fn word<R: Rng>(rng: &mut R, len: usize) -> String {
    const LOWER: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
    const UPPER: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ";
    (0..len)
        .map(|i| {
            let set = if i == 0 { UPPER } else { LOWER };
            set[rng.gen_range(0..set.len())] as char
        })
        .collect()
}

fn number<R: Rng>(rng: &mut R) -> String {
    let digits = rng.gen_range(1..=3);
    let mut s: String = (0..digits)
        .map(|_| char::from(b'0' + rng.gen_range(0..10u8)))
        .collect();
    match rng.gen_range(0..6) {
        0 => s = format!("{s}.{}", rng.gen_range(0..10)),
        1 => s = format!("-{s}"),
        2 => s.push('%'),
        3 => s = format!("({s})"),
        4 => s = format!("{s},{}", rng.gen_range(0..10)),
        _ => {}
    }
    s
}

fn text<R: Rng>(rng: &mut R, header: bool, max_len: usize) -> String {
    let s = if header || rng.gen_bool(0.3) {
        let len = rng.gen_range(2..=5);
        if rng.gen_bool(0.15) {
            format!("{} {}", word(rng, len), word(rng, 1).to_lowercase())
        } else {
            word(rng, len)
        }
    } else {
        number(rng)
    };
    let cut: String = s.chars().take(max_len).collect();
    cut.trim().to_string()
}

/// Draws a table layout. Spans are proposed per anchor and rejected when
/// they would overlap, leave the grid or cross the header boundary.
pub fn sample_table_spec<R: Rng>(rng: &mut R, cfg: &GenConfig) -> TableSpec {
    let rows = rng.gen_range(cfg.min_rows..=cfg.max_rows);
    let cols = rng.gen_range(cfg.min_cols..=cfg.max_cols);
    let header_rows = if rows >= 2 && rng.gen_bool(cfg.header_prob) {
        1
    } else {
        0
    };
    let style = if rng.gen_bool(cfg.full_grid_prob) {
        LineStyle::FullGrid
    } else {
        LineStyle::Horizontal
    };
    let mut taken = vec![false; rows * cols];
    let mut cells = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if taken[r * cols + c] {
                continue;
            }
            let (band_lo, band_hi) = if r < header_rows {
                (0, header_rows)
            } else {
                (header_rows, rows)
            };
            debug_assert!(band_lo <= r);
            let (mut rs, mut cs) = (1, 1);
            if cfg.max_span > 1 && rng.gen_bool(cfg.span_prob) {
                for _ in 0..4 {
                    let (prs, pcs) = match rng.gen_range(0..3) {
                        0 => (rng.gen_range(2..=cfg.max_span), 1),
                        1 => (1, rng.gen_range(2..=cfg.max_span)),
                        _ => (
                            rng.gen_range(2..=cfg.max_span),
                            rng.gen_range(2..=cfg.max_span),
                        ),
                    };
                    let fits = r + prs <= band_hi
                        && c + pcs <= cols
                        && (r..r + prs).all(|y| (c..c + pcs).all(|x| !taken[y * cols + x]));
                    if fits {
                        (rs, cs) = (prs, pcs);
                        break;
                    }
                }
            }
            for y in r..r + rs {
                for x in c..c + cs {
                    taken[y * cols + x] = true;
                }
            }
            let empty = rng.gen_bool(cfg.empty_prob);
            let t = if empty {
                String::new()
            } else {
                text(rng, r < header_rows, cfg.max_text_len)
            };
            cells.push(SpecCell {
                row: r,
                col: c,
                rowspan: rs,
                colspan: cs,
                text: t,
            });
        }
    }
    let spec = TableSpec {
        rows,
        cols,
        header_rows,
        cells,
        style,
        seed: rng.gen(),
    };
    if spec.validate(cfg.max_span).is_ok() {
        spec
    } else {
        span_free(spec)
    }
}

fn span_free(spec: TableSpec) -> TableSpec {
    let mut cells = Vec::new();
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let text = spec
                .cells
                .iter()
                .find(|k| k.row == r && k.col == c)
                .map(|k| k.text.clone())
                .unwrap_or_default();
            cells.push(SpecCell {
                row: r,
                col: c,
                rowspan: 1,
                colspan: 1,
                text,
            });
        }
    }
    TableSpec { cells, ..spec }
}
