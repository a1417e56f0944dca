//! Deterministic rasterization of a [`TableSpec`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::font::{glyph, inked, ADVANCE, GLYPH_H, GLYPH_W};
use super::spec::{LineStyle, TableSpec};
use super::{DataError, Sample};
use crate::tensor::Tensor;
use crate::vocab::{tokenize_content, CellAnnotation, TableAnnotation};

/// Blank border around the table, in pixels.
pub const MARGIN: usize = 4;
/// Gap between a rule and the text inside a cell.
const PAD: usize = 2;

/// Smallest row height and column width that still hold one glyph.
pub fn min_cell_extent() -> (usize, usize) {
    (GLYPH_H + 2 * PAD + 1, GLYPH_W + 2 * PAD + 1)
}

/// Number of characters that fit in `width` interior pixels.
fn capacity(width: usize) -> usize {
    width.saturating_sub(2 * PAD).saturating_add(1) / ADVANCE
}

struct Canvas {
    h: usize,
    w: usize,
    ink: Vec<bool>,
}

impl Canvas {
    fn set(&mut self, x: usize, y: usize) {
        if x < self.w && y < self.h {
            self.ink[y * self.w + x] = true;
        }
    }

    fn hline(&mut self, y: usize, x0: usize, x1: usize) {
        for x in x0..=x1 {
            self.set(x, y);
        }
    }

    fn vline(&mut self, x: usize, y0: usize, y1: usize) {
        for y in y0..=y1 {
            self.set(x, y);
        }
    }

    /// Draws `text` with its layout origin at `(x, y)`; returns the tight
    /// ink box `[x0, y0, x1, y1]` (exclusive end), if anything was inked.
    fn text(&mut self, text: &str, x: usize, y: usize) -> Option<[u32; 4]> {
        let mut bbox: Option<[usize; 4]> = None;
        for (i, ch) in text.chars().enumerate() {
            let rows = glyph(ch)?;
            for gy in 0..GLYPH_H {
                for gx in 0..GLYPH_W {
                    if inked(&rows, gx, gy) {
                        let (px, py) = (x + i * ADVANCE + gx, y + gy);
                        self.set(px, py);
                        let b = bbox.get_or_insert([px, py, px + 1, py + 1]);
                        b[0] = b[0].min(px);
                        b[1] = b[1].min(py);
                        b[2] = b[2].max(px + 1);
                        b[3] = b[3].max(py + 1);
                    }
                }
            }
        }
        bbox.map(|b| b.map(|v| v as u32))
    }
}

/// Splits `total` pixels into parts proportional to `weights`.
fn split(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    let mut parts: Vec<usize> = weights.iter().map(|w| total * w / sum).collect();
    let rest = total - parts.iter().sum::<usize>();
    for p in parts.iter_mut().take(rest) {
        *p += 1;
    }
    parts
}

/// Renders the table into an `h`×`w`×`channels` image with white paper and
/// black ink. Text that does not fit its cell is truncated and the
/// annotation records the truncated text.
pub fn render(spec: &TableSpec, h: usize, w: usize, channels: usize) -> Result<Sample, DataError> {
    spec.validate(crate::vocab::DEFAULT_MAX_SPAN)
        .map_err(DataError::Spec)?;
    let (min_rh, min_cw) = min_cell_extent();
    let avail_h = h.saturating_sub(2 * MARGIN + 1);
    let avail_w = w.saturating_sub(2 * MARGIN + 1);
    if spec.rows * min_rh > avail_h || spec.cols * min_cw > avail_w {
        return Err(DataError::Spec(format!(
            "{}x{} grid does not fit a {h}x{w} image",
            spec.rows, spec.cols
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let row_h = (avail_h / spec.rows).min(min_rh + rng.gen_range(2..=10));
    let centered = rng.gen_bool(0.5);

    let mut weights = vec![2usize; spec.cols];
    for c in spec.cells.iter().filter(|c| c.colspan == 1) {
        weights[c.col] = weights[c.col].max(2 + c.text.chars().count());
    }
    let mut widths = split(avail_w - spec.cols * min_cw, &weights);
    widths.iter_mut().for_each(|x| *x += min_cw);
    let mut xs = vec![MARGIN];
    for wd in &widths {
        xs.push(xs.last().unwrap() + wd);
    }
    let ys: Vec<usize> = (0..=spec.rows).map(|r| MARGIN + r * row_h).collect();

    let mut canvas = Canvas {
        h,
        w,
        ink: vec![false; h * w],
    };
    let mut cells = Vec::with_capacity(spec.cells.len());
    for c in &spec.cells {
        let (x0, x1) = (xs[c.col], xs[c.col + c.colspan]);
        let (y0, y1) = (ys[c.row], ys[c.row + c.rowspan]);
        canvas.hline(y0, x0, x1);
        canvas.hline(y1, x0, x1);
        if spec.style == LineStyle::FullGrid {
            canvas.vline(x0, y0, y1);
            canvas.vline(x1, y0, y1);
        }
        let inner_w = x1 - x0 - 1;
        let inner_h = y1 - y0 - 1;
        let fitted: String = c.text.chars().take(capacity(inner_w)).collect();
        let fitted = fitted.trim();
        let n = fitted.chars().count();
        let text_w = (n * ADVANCE).saturating_sub(1);
        let tx = if centered {
            x0 + 1 + (inner_w - text_w) / 2
        } else {
            x0 + 1 + PAD
        };
        let ty = y0 + 1 + (inner_h - GLYPH_H) / 2;
        let bbox = canvas.text(fitted, tx, ty);
        let text = if bbox.is_some() { fitted } else { "" };
        cells.push(CellAnnotation {
            content_tokens: tokenize_content(text),
            bbox,
        });
    }

    let mut data = Vec::with_capacity(h * w * channels);
    for &ink in &canvas.ink {
        let v = if ink { 0.0 } else { 1.0 };
        data.extend(std::iter::repeat_n(v, channels));
    }
    let image =
        Tensor::new(vec![h, w, channels], data).map_err(|e| DataError::Spec(e.to_string()))?;
    let annotation = TableAnnotation {
        structure_tokens: spec.structure_tokens(),
        cells,
        image_size: (h, w, channels),
    };
    Ok(Sample { image, annotation })
}
