mod common;

use common::model::{random_image, small_config};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tabrec::decoding::{recognize_table, repair_structure, DecodeOptions, TableResult};
use tabrec::model::Model;
use tabrec::vocab::{assemble_html, is_cell_trigger, parse_table_tree, StructVocab, CELL, EOS_ID};

fn decode(model: &Model<f32>, seed: u64, original: (usize, usize)) -> TableResult {
    let image = random_image(&mut ChaCha8Rng::seed_from_u64(seed), &model.config);
    recognize_table(model, &image, original, DecodeOptions::default()).unwrap()
}

fn biased(token_id: usize) -> Model<f32> {
    let mut model = Model::<f32>::new(small_config(), 0).unwrap();
    let bias = model.params.index("structure.out.bias").unwrap();
    model.params.tensors[bias].data_mut()[token_id] = 100.0;
    model
}

fn check_consistent(r: &TableResult) {
    let triggers = r
        .emitted_tokens
        .iter()
        .filter(|t| is_cell_trigger(t))
        .count();
    assert_eq!(r.cells.len(), triggers);
    assert_eq!(
        r.structure_tokens
            .iter()
            .filter(|t| is_cell_trigger(t))
            .count(),
        triggers
    );
    assert_eq!(r.structure_probs.len(), r.emitted_tokens.len());
    parse_table_tree(&r.html).unwrap();
}

#[test]
fn immediate_eos_yields_no_cells() {
    let r = decode(&biased(EOS_ID), 1, (32, 32));
    assert!(r.emitted_tokens.is_empty() && r.cells.is_empty());
    assert!(!r.truncated);
    assert_eq!(r.repairs, 0);
}

#[test]
fn endless_triggers_hit_the_cap_and_still_assemble() {
    let model = biased(StructVocab::default().id(CELL).unwrap());
    let r = decode(&model, 2, (32, 32));
    assert!(r.truncated);
    assert_eq!(r.cells.len(), model.config.max_struct_len);
    assert!(r.repairs > 0);
    check_consistent(&r);
}

#[test]
fn untrained_decodes_are_consistent_and_deterministic() {
    for seed in 0..20 {
        let model = Model::<f32>::new(small_config(), seed).unwrap();
        let original = (50 + seed as usize, 80);
        let r = decode(&model, seed, original);
        check_consistent(&r);
        for c in &r.cells {
            let [x0, y0, x1, y1] = c.bbox;
            assert!(0.0 <= x0 && x0 <= x1 && x1 <= 80.0);
            assert!(0.0 <= y0 && y0 <= y1 && y1 <= original.0 as f64);
            assert!(c.confidence > 0.0 && c.confidence <= 1.0);
        }
        let again = decode(&model, seed, original);
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }
}

#[test]
fn beam_search_is_rejected() {
    let model = Model::<f32>::new(small_config(), 0).unwrap();
    let image = random_image(&mut ChaCha8Rng::seed_from_u64(0), &model.config);
    assert!(recognize_table(&model, &image, (32, 32), DecodeOptions { beam_width: 2 }).is_err());
}

fn token_soup() -> impl Strategy<Value = Vec<String>> {
    let tokens: Vec<String> = StructVocab::default().tokens()[4..].to_vec();
    prop::collection::vec(prop::sample::select(tokens), 0..60)
}

proptest! {
    #[test]
    fn repair_keeps_triggers_and_yields_valid_html(tokens in token_soup()) {
        let (fixed, _) = repair_structure(&tokens);
        let before = tokens.iter().filter(|t| is_cell_trigger(t)).count();
        let after: Vec<&String> = fixed.iter().filter(|t| is_cell_trigger(t)).collect();
        prop_assert_eq!(after.len(), before);
        let contents = vec!["x"; before];
        let html = assemble_html(&fixed, &contents).unwrap();
        parse_table_tree(&html).unwrap();
        let (again, edits) = repair_structure(&fixed);
        prop_assert_eq!(edits, 0);
        prop_assert_eq!(again, fixed);
    }
}
