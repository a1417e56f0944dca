use serde::{Deserialize, Serialize};

use super::{assemble_html, detokenize_content, is_cell_trigger};

/// Ground truth for one cell: its characters and, when non-empty, the pixel
/// box `[x0, y0, x1, y1]` of its text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellAnnotation {
    pub content_tokens: Vec<String>,
    pub bbox: Option<[u32; 4]>,
}

impl CellAnnotation {
    pub fn text(&self) -> String {
        detokenize_content(&self.content_tokens)
    }

    pub fn is_empty(&self) -> bool {
        self.content_tokens.is_empty()
    }
}

/// Ground truth for one table image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableAnnotation {
    pub structure_tokens: Vec<String>,
    pub cells: Vec<CellAnnotation>,
    /// `(height, width, channels)` of the annotated image.
    pub image_size: (usize, usize, usize),
}

impl TableAnnotation {
    pub fn trigger_count(&self) -> usize {
        self.structure_tokens
            .iter()
            .filter(|t| is_cell_trigger(t))
            .count()
    }

    /// Checks the cell/trigger correspondence, the box-iff-content rule and
    /// box bounds. Returns a description of the first violation.
    pub fn validate(&self) -> Result<(), String> {
        let triggers = self.trigger_count();
        if triggers != self.cells.len() {
            return Err(format!(
                "{triggers} cell tokens but {} cells",
                self.cells.len()
            ));
        }
        let (h, w, _) = self.image_size;
        for (i, cell) in self.cells.iter().enumerate() {
            match (cell.is_empty(), cell.bbox) {
                (true, Some(_)) => return Err(format!("cell {i} is empty but has a box")),
                (false, None) => return Err(format!("cell {i} has content but no box")),
                (_, Some([x0, y0, x1, y1]))
                    if !(x0 <= x1 && x1 as usize <= w && y0 <= y1 && y1 as usize <= h) =>
                {
                    return Err(format!(
                        "cell {i} box {:?} outside {w}x{h}",
                        [x0, y0, x1, y1]
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn contents(&self) -> Vec<String> {
        self.cells.iter().map(CellAnnotation::text).collect()
    }

    /// Full HTML with cell texts inserted into the structure.
    pub fn html(&self) -> Result<String, super::VocabError> {
        assemble_html(&self.structure_tokens, &self.contents())
    }

    /// True when any cell spans more than one row or column.
    pub fn is_complex(&self) -> bool {
        self.structure_tokens.iter().any(|t| t == super::CELL_OPEN)
    }
}
