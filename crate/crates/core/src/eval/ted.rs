//! Zhang–Shasha ordered tree edit distance.

use super::TableNode;

/// Edit costs for [`tree_edit_distance`].
pub trait CostModel {
    fn insert(&self, node: &TableNode) -> f64;
    fn delete(&self, node: &TableNode) -> f64;
    fn substitute(&self, a: &TableNode, b: &TableNode) -> f64;
}

/// Unit insert/delete, and substitution costing 1 whenever tags differ.
#[derive(Clone, Copy, Debug, Default)]
pub struct TagCost;

impl CostModel for TagCost {
    fn insert(&self, _: &TableNode) -> f64 {
        1.0
    }
    fn delete(&self, _: &TableNode) -> f64 {
        1.0
    }
    fn substitute(&self, a: &TableNode, b: &TableNode) -> f64 {
        if a.tag == b.tag {
            0.0
        } else {
            1.0
        }
    }
}

/// Postorder view with leftmost-leaf descendants and keyroots (1-based).
struct Indexed<'a> {
    nodes: Vec<&'a TableNode>,
    lmld: Vec<usize>,
    keyroots: Vec<usize>,
}

impl<'a> Indexed<'a> {
    fn new(root: &'a TableNode) -> Self {
        let mut nodes = vec![root]; // placeholder at index 0
        let mut lmld = vec![0];
        fn walk<'a>(
            n: &'a TableNode,
            nodes: &mut Vec<&'a TableNode>,
            lmld: &mut Vec<usize>,
        ) -> usize {
            let mut first = None;
            for c in &n.children {
                let l = walk(c, nodes, lmld);
                first.get_or_insert(l);
            }
            nodes.push(n);
            let idx = nodes.len() - 1;
            let l = first.unwrap_or(idx);
            lmld.push(l);
            l
        }
        walk(root, &mut nodes, &mut lmld);
        let n = nodes.len() - 1;
        let mut seen = vec![false; n + 1];
        let mut keyroots = Vec::new();
        for i in (1..=n).rev() {
            if !seen[lmld[i]] {
                seen[lmld[i]] = true;
                keyroots.push(i);
            }
        }
        keyroots.reverse();
        Self {
            nodes,
            lmld,
            keyroots,
        }
    }

    fn len(&self) -> usize {
        self.nodes.len() - 1
    }
}

/// Minimal total cost of node insertions, deletions and substitutions that
/// turn tree `a` into tree `b`.
pub fn tree_edit_distance(a: &TableNode, b: &TableNode, cost: &impl CostModel) -> f64 {
    let ta = Indexed::new(a);
    let tb = Indexed::new(b);
    let (n, m) = (ta.len(), tb.len());
    let mut td = vec![0.0f64; (n + 1) * (m + 1)];
    let mut fd = vec![0.0f64; (n + 1) * (m + 1)];
    let w = m + 1;
    for &i in &ta.keyroots {
        for &j in &tb.keyroots {
            let (li, lj) = (ta.lmld[i], tb.lmld[j]);
            // fd is indexed with offsets so that row li-1 / column lj-1 is the
            // empty forest.
            let at = |x: usize, y: usize| x * w + y;
            fd[at(li - 1, lj - 1)] = 0.0;
            for x in li..=i {
                fd[at(x, lj - 1)] = fd[at(x - 1, lj - 1)] + cost.delete(ta.nodes[x]);
            }
            for y in lj..=j {
                fd[at(li - 1, y)] = fd[at(li - 1, y - 1)] + cost.insert(tb.nodes[y]);
            }
            for x in li..=i {
                for y in lj..=j {
                    let del = fd[at(x - 1, y)] + cost.delete(ta.nodes[x]);
                    let ins = fd[at(x, y - 1)] + cost.insert(tb.nodes[y]);
                    if ta.lmld[x] == li && tb.lmld[y] == lj {
                        let sub = fd[at(x - 1, y - 1)] + cost.substitute(ta.nodes[x], tb.nodes[y]);
                        let v = del.min(ins).min(sub);
                        fd[at(x, y)] = v;
                        td[at(x, y)] = v;
                    } else {
                        let tree = fd[at(ta.lmld[x] - 1, tb.lmld[y] - 1)] + td[at(x, y)];
                        fd[at(x, y)] = del.min(ins).min(tree);
                    }
                }
            }
        }
    }
    td[n * w + m]
}
