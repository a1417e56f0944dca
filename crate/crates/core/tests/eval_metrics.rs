mod common;

use common::ted_oracle::{all_trees, brute_force_ted, random_table_tree, random_tree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tabrec::eval::{
    map_cell_detection, teds, teds_struct, teds_trees, tree_edit_distance, Detection, TableNode,
    TableTree, TagCost, TedsCost,
};

const LABELS: [&str; 3] = ["a", "b", "c"];

#[test]
fn tree_enumeration_counts() {
    // 3^n labelings times Catalan(n-1) shapes
    let expect = [3, 9, 54, 405];
    for (n, &e) in (1..=4).zip(&expect) {
        assert_eq!(all_trees(n, &LABELS).len(), e);
    }
}

#[test]
fn single_node_relabel_matches_oracle() {
    let (a, b) = (TableNode::new("a"), TableNode::new("b"));
    assert_eq!(brute_force_ted(&a, &b, &TagCost), 1.0);
    assert_eq!(tree_edit_distance(&a, &b, &TagCost), 1.0);
}

#[test]
fn ted_is_symmetric_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..500 {
        let n_a = rng.gen_range(1..12);
        let a = random_table_tree(&mut rng, n_a);
        let n_b = rng.gen_range(1..12);
        let b = random_table_tree(&mut rng, n_b);
        let ab = tree_edit_distance(&a, &b, &TedsCost);
        let ba = tree_edit_distance(&b, &a, &TedsCost);
        assert!((ab - ba).abs() < 1e-12, "{ab} vs {ba}");
    }
}

#[test]
fn content_aware_cost_matches_oracle_on_small_tables() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..300 {
        let n_a = rng.gen_range(1..6);
        let a = random_table_tree(&mut rng, n_a);
        let n_b = rng.gen_range(1..6);
        let b = random_table_tree(&mut rng, n_b);
        let dp = tree_edit_distance(&a, &b, &TedsCost);
        let bf = brute_force_ted(&a, &b, &TedsCost);
        assert!((dp - bf).abs() < 1e-12, "dp {dp} vs brute force {bf}");
    }
}

#[test]
fn missing_cell_scores_four_fifths_by_oracle() {
    let gt = TableNode::new("table").with_children(vec![TableNode::new("tr").with_children(vec![
        TableNode::cell("", 1, 1),
        TableNode::cell("", 1, 1),
        TableNode::cell("", 1, 1),
    ])]);
    let mut pred = gt.clone();
    pred.children[0].children.pop();
    let ted = brute_force_ted(&pred, &gt, &TedsCost);
    assert_eq!(ted, 1.0);
    assert_eq!(1.0 - ted / 5.0, 0.8);
    assert!((teds_trees(&TableTree::new(pred), &TableTree::new(gt)) - 0.8).abs() < 1e-12);
}

#[test]
fn teds_bounds_and_struct_dominance() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..1000 {
        let n_a = rng.gen_range(1..10);
        let a = TableTree::new(random_table_tree(&mut rng, n_a));
        let n_b = rng.gen_range(1..10);
        let b = TableTree::new(random_table_tree(&mut rng, n_b));
        let full = teds_trees(&a, &b);
        let st = teds_trees(&a.without_content(), &b.without_content());
        assert!((0.0..=1.0).contains(&full));
        assert!(st >= full - 1e-12, "struct {st} < full {full}");
        assert_eq!(
            full == 1.0,
            a == b || tree_edit_distance(&a.root, &b.root, &TedsCost) == 0.0
        );
    }
}

#[test]
fn teds_is_one_only_for_equal_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..300 {
        let n_a = rng.gen_range(1..7);
        let a = random_tree(&mut rng, n_a, &LABELS);
        let n_b = rng.gen_range(1..7);
        let b = random_tree(&mut rng, n_b, &LABELS);
        let d = tree_edit_distance(&a, &b, &TagCost);
        assert_eq!(d == 0.0, a == b);
    }
}

#[test]
fn teds_struct_blank_contents() {
    let gt = "<thead><tr><td>h1</td><td>h2</td></tr></thead><tbody><tr><td>1</td><td>2</td></tr></tbody>";
    let pred =
        "<thead><tr><td>zz</td><td>q</td></tr></thead><tbody><tr><td>9</td><td>8</td></tr></tbody>";
    assert_eq!(teds_struct(pred, gt).unwrap(), 1.0);
    assert!(teds(pred, gt).unwrap() < 1.0);
    assert_eq!(teds(gt, gt).unwrap(), 1.0);
}

fn jitter(rng: &mut ChaCha8Rng) -> Vec<Vec<[f64; 4]>> {
    (0..5)
        .map(|_| {
            (0..rng.gen_range(0..6))
                .map(|_| {
                    let (x, y) = (rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
                    [
                        x,
                        y,
                        x + rng.gen_range(2.0..20.0),
                        y + rng.gen_range(2.0..20.0),
                    ]
                })
                .collect()
        })
        .collect()
}

#[test]
fn map_invariant_under_monotone_confidence_transform() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for _ in 0..200 {
        let gt = jitter(&mut rng);
        let preds: Vec<Vec<Detection>> = gt
            .iter()
            .map(|g| {
                let mut v = Vec::new();
                for b in g {
                    if !rng.gen_bool(0.7) {
                        continue;
                    }
                    let d = rng.gen_range(-3.0..3.0);
                    v.push(Detection {
                        bbox: [b[0] + d, b[1], b[2] + d, b[3]],
                        confidence: rng.gen_range(0.0..1.0),
                    });
                }
                if rng.gen_bool(0.5) {
                    v.push(Detection {
                        bbox: [0.0, 0.0, 5.0, 5.0],
                        confidence: rng.gen_range(0.0..1.0),
                    });
                }
                v
            })
            .collect();
        let warped: Vec<Vec<Detection>> = preds
            .iter()
            .map(|v| {
                v.iter()
                    .map(|d| Detection {
                        confidence: (3.0 * d.confidence).exp() - 7.0,
                        ..*d
                    })
                    .collect()
            })
            .collect();
        assert_eq!(
            map_cell_detection(&preds, &gt, 0.5),
            map_cell_detection(&warped, &gt, 0.5)
        );
    }
}
