use std::collections::{BTreeMap, HashMap};

use super::emulate::Detection;
use crate::types::{ObjectClass, PixelBox};

/// A ground-truth box in a given frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthBox {
    pub frame_index: u64,
    pub class: ObjectClass,
    pub bbox: PixelBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApReport {
    /// AP for every class with at least one truth box.
    pub per_class: BTreeMap<ObjectClass, f64>,
    pub map: f64,
}

impl ApReport {
    pub fn get(&self, c: ObjectClass) -> Option<f64> {
        self.per_class.get(&c).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApError {
    #[error("no ground-truth boxes to evaluate against")]
    EmptyTruth,
}

/// Area under the precision envelope for a ranked list of hit/miss flags.
pub fn all_point_ap(ranked_hits: &[bool], truth_count: usize) -> f64 {
    if truth_count == 0 {
        return 0.0;
    }
    let mut points = Vec::with_capacity(ranked_hits.len());
    let mut tp = 0usize;
    for (i, &hit) in ranked_hits.iter().enumerate() {
        if hit {
            tp += 1;
        }
        points.push((tp as f64 / truth_count as f64, tp as f64 / (i + 1) as f64));
    }
    // precision envelope from the right
    for i in (0..points.len().saturating_sub(1)).rev() {
        points[i].1 = points[i].1.max(points[i + 1].1);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (recall, precision) in points {
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// Greedy confidence-ordered matching for one class: each detection takes
/// the unmatched truth box in its frame with the highest IoU, if that IoU
/// reaches the threshold. Returns hit flags in ranked order.
fn rank_and_match(dets: &[&Detection], truths: &[&TruthBox], iou_threshold: f64) -> Vec<bool> {
    let mut by_frame: HashMap<u64, Vec<usize>> = HashMap::new();
    for (i, t) in truths.iter().enumerate() {
        by_frame.entry(t.frame_index).or_default().push(i);
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence).then(a.cmp(&b)));
    let mut taken = vec![false; truths.len()];
    order
        .into_iter()
        .map(|di| {
            let d = dets[di];
            let Some(candidates) = by_frame.get(&d.frame_index) else {
                return false;
            };
            let mut best: Option<(usize, f64)> = None;
            for &ti in candidates {
                if taken[ti] {
                    continue;
                }
                let iou = d.bbox.iou(&truths[ti].bbox);
                if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((ti, iou));
                }
            }
            match best {
                Some((ti, _)) => {
                    taken[ti] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

pub fn evaluate_ap(detections: &[Detection], truth: &[TruthBox], iou_threshold: f64) -> Result<ApReport, ApError> {
    if truth.is_empty() {
        return Err(ApError::EmptyTruth);
    }
    let mut per_class = BTreeMap::new();
    for class in ObjectClass::ALL {
        let truths: Vec<&TruthBox> = truth.iter().filter(|t| t.class == class).collect();
        if truths.is_empty() {
            continue;
        }
        let dets: Vec<&Detection> = detections.iter().filter(|d| d.class == class).collect();
        let hits = rank_and_match(&dets, &truths, iou_threshold);
        per_class.insert(class, all_point_ap(&hits, truths.len()));
    }
    let map = per_class.values().sum::<f64>() / per_class.len() as f64;
    Ok(ApReport { per_class, map })
}
