//! Single-class PASCAL VOC average precision for cell boxes.

use serde::{Deserialize, Serialize};

/// A scored predicted box `[x0, y0, x1, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: [f64; 4],
    pub confidence: f64,
}

/// Intersection over union of two axis-aligned boxes with exclusive far
/// edges. Two identical empty boxes have IoU 1.
pub fn iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let area = |r: &[f64; 4]| (r[2] - r[0]).max(0.0) * (r[3] - r[1]).max(0.0);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    inter / union
}

/// Average precision of cell detections over a set of images.
///
/// Detections are ranked by confidence across all images. Each detection is
/// matched to the ground-truth box in its image with the highest IoU; it is a
/// true positive if that IoU reaches `iou_threshold` and the box is not
/// already taken. AP integrates the monotone precision envelope over every
/// recall change (all-point interpolation). Returns `None` when there is no
/// ground truth at all.
pub fn map_cell_detection(
    predictions: &[Vec<Detection>],
    ground_truth: &[Vec<[f64; 4]>],
    iou_threshold: f64,
) -> Option<f64> {
    assert_eq!(
        predictions.len(),
        ground_truth.len(),
        "one prediction list per image"
    );
    let total_gt: usize = ground_truth.iter().map(Vec::len).sum();
    if total_gt == 0 {
        return None;
    }
    let mut ranked: Vec<(usize, &Detection)> = predictions
        .iter()
        .enumerate()
        .flat_map(|(img, dets)| dets.iter().map(move |d| (img, d)))
        .collect();
    // stable: ties keep image/detection order
    ranked.sort_by(|a, b| b.1.confidence.total_cmp(&a.1.confidence));

    let mut taken: Vec<Vec<bool>> = ground_truth.iter().map(|g| vec![false; g.len()]).collect();
    let mut tp = Vec::with_capacity(ranked.len());
    for (img, det) in &ranked {
        let best = ground_truth[*img]
            .iter()
            .enumerate()
            .map(|(i, g)| (i, iou(&det.bbox, g)))
            .fold(None, |acc: Option<(usize, f64)>, cur| match acc {
                Some(a) if a.1 >= cur.1 => Some(a),
                _ => Some(cur),
            });
        let hit = match best {
            Some((i, overlap)) if overlap >= iou_threshold && !taken[*img][i] => {
                taken[*img][i] = true;
                true
            }
            _ => false,
        };
        tp.push(hit);
    }

    let mut recall = vec![0.0];
    let mut precision = vec![0.0];
    let mut hits = 0usize;
    for (k, &hit) in tp.iter().enumerate() {
        hits += usize::from(hit);
        recall.push(hits as f64 / total_gt as f64);
        precision.push(hits as f64 / (k + 1) as f64);
    }
    recall.push(1.0);
    precision.push(0.0);
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    for i in 1..recall.len() {
        if recall[i] != recall[i - 1] {
            ap += (recall[i] - recall[i - 1]) * precision[i];
        }
    }
    Some(ap)
}
