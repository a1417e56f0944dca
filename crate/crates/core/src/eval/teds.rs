use super::ted::{tree_edit_distance, CostModel};
use super::{EvalError, TableNode, TableTree};
use crate::vocab::parse_table_tree;

/// TEDS substitution rule: tags or spans differing cost 1; matching cells
/// cost the normalized edit distance of their contents; other matching nodes
/// are free. Inserts and deletes cost 1.
#[derive(Clone, Copy, Debug, Default)]
pub struct TedsCost;

impl CostModel for TedsCost {
    fn insert(&self, _: &TableNode) -> f64 {
        1.0
    }
    fn delete(&self, _: &TableNode) -> f64 {
        1.0
    }
    fn substitute(&self, a: &TableNode, b: &TableNode) -> f64 {
        if a.tag != b.tag {
            return 1.0;
        }
        if a.tag != "td" {
            return 0.0;
        }
        if a.colspan != b.colspan || a.rowspan != b.rowspan {
            return 1.0;
        }
        normalized_edit_distance(&a.content, &b.content)
    }
}

/// Character Levenshtein distance divided by the longer length.
pub fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()] as f64 / longest as f64
}

/// `1 − TED / max(|a|, |b|)` with node counts including the root.
pub fn teds_trees(pred: &TableTree, gt: &TableTree) -> f64 {
    let ted = tree_edit_distance(&pred.root, &gt.root, &TedsCost);
    let denom = pred.size().max(gt.size()) as f64;
    (1.0 - ted / denom).clamp(0.0, 1.0)
}

fn parse_pair(pred: &str, gt: &str) -> Result<(TableTree, TableTree), EvalError> {
    let gt = parse_table_tree(gt).map_err(EvalError::GroundTruth)?;
    let pred = parse_table_tree(pred).map_err(EvalError::Prediction)?;
    Ok((pred, gt))
}

/// Content-aware tree-edit-distance similarity between two table HTMLs.
pub fn teds(pred_html: &str, gt_html: &str) -> Result<f64, EvalError> {
    let (p, g) = parse_pair(pred_html, gt_html)?;
    Ok(teds_trees(&p, &g))
}

/// TEDS with all cell contents blanked: structure-only similarity.
pub fn teds_struct(pred_html: &str, gt_html: &str) -> Result<f64, EvalError> {
    let (p, g) = parse_pair(pred_html, gt_html)?;
    Ok(teds_trees(&p.without_content(), &g.without_content()))
}
