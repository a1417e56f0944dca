use proptest::prelude::*;
use tabrec::data::{
    batchify, generate, generate_sample, load_dataset, parse_record, write_dataset, GenConfig,
    LoadOptions, SeqLimits,
};
use tabrec::eval::iou;
use tabrec::vocab::{ContentVocab, StructVocab, PAD_ID};

const LIMITS: SeqLimits = SeqLimits {
    max_struct_len: 200,
    max_cell_len: 12,
};

#[test]
fn generated_samples_are_consistent() {
    let cfg = GenConfig::desk();
    let vocab = StructVocab::default();
    for s in generate(&cfg, 300, 5).unwrap() {
        let ann = &s.annotation;
        ann.validate().unwrap();
        let html = ann.html().unwrap();
        assert_eq!(vocab.tokenize(&html).unwrap(), ann.structure_tokens);
        assert_eq!(
            vocab.detokenize(&ann.structure_tokens).unwrap(),
            vocab.detokenize(&vocab.tokenize(&html).unwrap()).unwrap()
        );
        assert_eq!(tabrec::vocab::cell_contents(&html).unwrap(), ann.contents());
        for cell in &ann.cells {
            if let Some(b) = cell.bbox {
                let b = b.map(f64::from);
                assert_eq!(iou(&b, &b), 1.0);
                assert!(cell
                    .text()
                    .chars()
                    .all(|c| tabrec::data::font::ALPHABET.contains(c)));
            }
        }
        assert_eq!(s.image.shape(), &[160, 160, 1]);
        assert!(s.image.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }
}

#[test]
fn generation_is_order_independent() {
    let cfg = GenConfig::desk();
    let all = generate(&cfg, 20, 11).unwrap();
    assert_eq!(generate_sample(&cfg, 11, 17).unwrap(), all[17]);
}

#[test]
fn write_load_round_trip() {
    let cfg = GenConfig::desk();
    let samples = generate(&cfg, 12, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&samples, dir.path(), "train").unwrap();
    let loaded = load_dataset(dir.path(), LoadOptions::default()).unwrap();
    assert!(loaded.skipped.is_empty());
    assert_eq!(loaded.samples.len(), samples.len());
    for (a, b) in loaded.samples.iter().zip(&samples) {
        assert_eq!(a.sample, *b);
        assert_eq!(a.split, "train");
    }

    let other = tempfile::tempdir().unwrap();
    write_dataset(&samples, other.path(), "train").unwrap();
    let read = |d: &std::path::Path| std::fs::read(d.join("annotations.jsonl")).unwrap();
    assert_eq!(read(dir.path()), read(other.path()));
    let png = |d: &std::path::Path| std::fs::read(d.join("images/train_000004.png")).unwrap();
    assert_eq!(png(dir.path()), png(other.path()));
}

#[test]
fn empty_cells_serialize_without_bbox() {
    let samples = generate(
        &GenConfig {
            empty_prob: 0.5,
            ..GenConfig::desk()
        },
        3,
        1,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&samples, dir.path(), "val").unwrap();
    let text = std::fs::read_to_string(dir.path().join("annotations.jsonl")).unwrap();
    let line = text.lines().next().unwrap();
    assert!(line.starts_with(
        "{\"filename\":\"val_000000.png\",\"split\":\"val\",\"html\":{\"structure\":{\"tokens\":["
    ));
    assert!(line.contains("{\"tokens\":[]}"));
    let v: serde_json::Value = serde_json::from_str(line).unwrap();
    for cell in v["html"]["cells"].as_array().unwrap() {
        let empty = cell["tokens"].as_array().unwrap().is_empty();
        assert_eq!(cell.get("bbox").is_none(), empty);
    }
}

const PUBTABNET_LINE: &str = r#"{"imgid": 7, "filename": "PMC1_004_00.png", "split": "val", "html": {"structure": {"tokens": ["<thead>", "<tr>", "<td", " rowspan=\"2\"", ">", "</td>", "<td></td>", "</tr>", "<tr>", "<td></td>", "</tr>", "</thead>", "<tbody>", "<tr>", "<td></td>", "<td></td>", "</tr>", "</tbody>"]}, "cells": [{"tokens": ["<b>", "Y", "</b>"], "bbox": [1, 2, 10, 9]}, {"tokens": ["a"], "bbox": [20, 2, 25, 9]}, {"tokens": []}, {"tokens": ["1", ".", "5"], "bbox": [1, 20, 17, 27]}, {"tokens": ["2"], "bbox": [20, 20, 25, 27]}]}}"#;

#[test]
fn loads_pubtabnet_line() {
    let r = parse_record(PUBTABNET_LINE).unwrap();
    let ann = r.annotation((40, 40, 3));
    assert_eq!(ann.trigger_count(), 5);
    assert_eq!(ann.cells.len(), 5);
    assert_eq!(ann.cells[2].bbox, None);
    assert_eq!(ann.cells[0].text(), "<b>Y</b>");
    assert!(ann.is_complex());
    ann.validate().unwrap();

    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("val")).unwrap();
    let img = image::RgbImage::from_pixel(40, 40, image::Rgb([255, 255, 255]));
    img.save(dir.path().join("val/PMC1_004_00.png")).unwrap();
    let jsonl = dir.path().join("PubTabNet_sample.jsonl");
    let bad = PUBTABNET_LINE.replace(
        "\"<td></td>\", \"</tr>\", \"</thead>\"",
        "\"</tr>\", \"</thead>\"",
    );
    std::fs::write(&jsonl, format!("{PUBTABNET_LINE}\nnot json\n{bad}\n")).unwrap();
    let loaded = load_dataset(
        &jsonl,
        LoadOptions {
            channels: 1,
            resize: Some((32, 32)),
        },
    )
    .unwrap();
    assert_eq!(loaded.samples.len(), 1);
    assert_eq!(
        loaded.skipped.iter().map(|s| s.0).collect::<Vec<_>>(),
        [2, 3]
    );
    let s = &loaded.samples[0].sample;
    assert_eq!(s.image.shape(), &[32, 32, 1]);
    assert_eq!(s.annotation.image_size, (40, 40, 1));
}

#[test]
fn batch_of_one_has_no_padding() {
    let samples = generate(&GenConfig::desk(), 1, 8).unwrap();
    let (batches, skipped) = batchify(
        &samples,
        4,
        &StructVocab::default(),
        &ContentVocab::default(),
        LIMITS,
    );
    assert!(skipped.is_empty());
    let b = &batches[0];
    assert!(b.struct_in[0].iter().skip(1).all(|&id| id != PAD_ID));
    assert_eq!(
        b.struct_out[0].len(),
        samples[0].annotation.structure_tokens.len() + 1
    );
    let longest = samples[0]
        .annotation
        .cells
        .iter()
        .map(|c| c.content_tokens.len())
        .max()
        .unwrap();
    assert_eq!(b.cell_out[0].len(), longest + 1);
}

#[test]
fn overlong_samples_are_skipped() {
    let samples = generate(&GenConfig::desk(), 6, 8).unwrap();
    let limits = SeqLimits {
        max_struct_len: 30,
        max_cell_len: 12,
    };
    let (batches, skipped) = batchify(
        &samples,
        4,
        &StructVocab::default(),
        &ContentVocab::default(),
        limits,
    );
    let kept: usize = batches.iter().map(|b| b.len()).sum();
    assert_eq!(kept + skipped.len(), 6);
    for (i, _) in &skipped {
        assert!(samples[*i].annotation.structure_tokens.len() + 1 > 30);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn alignment_is_a_bijection(seed in 0u64..1000, count in 1usize..9, bs in 1usize..5) {
        let samples = generate(&GenConfig::desk(), count, seed).unwrap();
        let svocab = StructVocab::default();
        let (batches, _) = batchify(&samples, bs, &svocab, &ContentVocab::default(), LIMITS);
        let mut seen = 0;
        for b in &batches {
            let mut pairs = b.cell_index.clone();
            pairs.dedup();
            prop_assert_eq!(pairs.len(), b.cell_index.len());
            for (k, &idx) in b.indices.iter().enumerate() {
                let (sin, sout, cells) = b.sample(k);
                prop_assert_eq!(sin.len(), sout.len());
                let ann = &samples[idx].annotation;
                prop_assert_eq!(cells.len(), ann.cells.len());
                for (c, j) in cells.enumerate() {
                    let (s, t) = b.cell_index[j];
                    prop_assert_eq!(s, k);
                    prop_assert!(svocab.is_trigger_id(sout[t]));
                    prop_assert_eq!(b.bbox_mask[j], !ann.cells[c].is_empty());
                    for v in b.bbox[j] {
                        prop_assert!((0.0..=1.0).contains(&v));
                    }
                }
                seen += ann.cells.len();
            }
        }
        let total: usize = samples.iter().map(|s| s.annotation.cells.len()).sum();
        prop_assert_eq!(seen, total);
    }
}
