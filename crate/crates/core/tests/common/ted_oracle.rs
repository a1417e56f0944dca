//! Brute-force tree edit distance: exhaustive search over all valid edit
//! mappings (one-to-one node pairings that preserve both preorder and
//! postorder relations). Exponential, only for trees of a handful of nodes.

use rand::Rng;
use tabrec::eval::{CostModel, TableNode};

struct Flat<'a> {
    nodes: Vec<&'a TableNode>,
    post: Vec<usize>,
}

fn flatten(root: &TableNode) -> Flat<'_> {
    fn walk<'a>(
        n: &'a TableNode,
        nodes: &mut Vec<&'a TableNode>,
        post: &mut Vec<usize>,
        counter: &mut usize,
    ) {
        let me = nodes.len();
        nodes.push(n);
        post.push(0);
        for c in &n.children {
            walk(c, nodes, post, counter);
        }
        post[me] = *counter;
        *counter += 1;
    }
    let (mut nodes, mut post, mut counter) = (Vec::new(), Vec::new(), 0);
    walk(root, &mut nodes, &mut post, &mut counter);
    Flat { nodes, post }
}

pub fn brute_force_ted(a: &TableNode, b: &TableNode, cost: &impl CostModel) -> f64 {
    let fa = flatten(a);
    let fb = flatten(b);
    let mut best = f64::INFINITY;
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut used = vec![false; fb.nodes.len()];
    search(&fa, &fb, cost, 0, &mut pairs, &mut used, &mut best);
    best
}

fn search(
    fa: &Flat,
    fb: &Flat,
    cost: &impl CostModel,
    i: usize,
    pairs: &mut Vec<(usize, usize)>,
    used: &mut Vec<bool>,
    best: &mut f64,
) {
    if i == fa.nodes.len() {
        let mut total = 0.0;
        let mut mapped_a = vec![false; fa.nodes.len()];
        for &(x, y) in pairs.iter() {
            mapped_a[x] = true;
            total += cost.substitute(fa.nodes[x], fb.nodes[y]);
        }
        for (x, n) in fa.nodes.iter().enumerate() {
            if !mapped_a[x] {
                total += cost.delete(n);
            }
        }
        for (y, n) in fb.nodes.iter().enumerate() {
            if !used[y] {
                total += cost.insert(n);
            }
        }
        if total < *best {
            *best = total;
        }
        return;
    }
    // leave node i unmapped
    search(fa, fb, cost, i + 1, pairs, used, best);
    // or map it to any compatible node of b
    for j in 0..fb.nodes.len() {
        if used[j] {
            continue;
        }
        let ok = pairs.iter().all(|&(x, y)| {
            (x < i) == (y < j) && (fa.post[x] < fa.post[i]) == (fb.post[y] < fb.post[j])
        });
        if !ok {
            continue;
        }
        used[j] = true;
        pairs.push((i, j));
        search(fa, fb, cost, i + 1, pairs, used, best);
        pairs.pop();
        used[j] = false;
    }
}

/// Every ordered tree with exactly `n` nodes over `labels`.
pub fn all_trees(n: usize, labels: &[&str]) -> Vec<TableNode> {
    let mut out = Vec::new();
    for label in labels {
        for kids in forests(n - 1, labels) {
            out.push(TableNode::new(*label).with_children(kids));
        }
    }
    out
}

/// Every ordered forest with exactly `n` nodes.
fn forests(n: usize, labels: &[&str]) -> Vec<Vec<TableNode>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 1..=n {
        let heads = all_trees(first, labels);
        let tails = forests(n - first, labels);
        for h in &heads {
            for t in &tails {
                let mut f = vec![h.clone()];
                f.extend(t.iter().cloned());
                out.push(f);
            }
        }
    }
    out
}

/// Random ordered tree with `n` nodes: each new node attaches to a random
/// existing node as its last child.
pub fn random_tree(rng: &mut impl Rng, n: usize, labels: &[&str]) -> TableNode {
    let mut parent = vec![usize::MAX];
    for i in 1..n {
        parent.push(rng.gen_range(0..i));
    }
    let tags: Vec<&str> = (0..n)
        .map(|_| labels[rng.gen_range(0..labels.len())])
        .collect();
    fn build(i: usize, parent: &[usize], tags: &[&str]) -> TableNode {
        let kids = (0..parent.len())
            .filter(|&c| parent[c] == i)
            .map(|c| build(c, parent, tags))
            .collect();
        TableNode::new(tags[i]).with_children(kids)
    }
    build(0, &parent, &tags)
}

/// Random tree over table tags whose `td` leaves carry random short text and
/// spans, for exercising the content-aware cost.
pub fn random_table_tree(rng: &mut impl Rng, n: usize) -> TableNode {
    let mut t = random_tree(rng, n, &["table", "tr", "td"]);
    fn decorate(n: &mut TableNode, rng: &mut impl Rng) {
        if n.tag == "td" {
            let len = rng.gen_range(0..4);
            n.content = (0..len)
                .map(|_| ['a', 'b', '1'][rng.gen_range(0..3)])
                .collect();
            n.colspan = if rng.gen_bool(0.2) { 2 } else { 1 };
        }
        for c in &mut n.children {
            decorate(c, rng);
        }
    }
    decorate(&mut t, rng);
    t
}
