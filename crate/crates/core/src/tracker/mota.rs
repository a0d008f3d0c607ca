use std::collections::{BTreeMap, HashMap};

use super::hungarian::hungarian;
use crate::types::{ObjectClass, PixelBox};

/// A labelled box in one frame: a truth object or a track output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledBox {
    pub id: u64,
    pub class: ObjectClass,
    pub bbox: PixelBox,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MotaCounts {
    pub gt: u64,
    pub fn_: u64,
    pub fp: u64,
    pub idsw: u64,
    pub matches: u64,
}

impl MotaCounts {
    pub fn mota(&self) -> Option<f64> {
        (self.gt > 0).then(|| 1.0 - (self.fn_ + self.fp + self.idsw) as f64 / self.gt as f64)
    }

    fn add(&mut self, o: &MotaCounts) {
        self.gt += o.gt;
        self.fn_ += o.fn_;
        self.fp += o.fp;
        self.idsw += o.idsw;
        self.matches += o.matches;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotaReport {
    /// Counts for every class that has ground truth.
    pub per_class: BTreeMap<ObjectClass, MotaCounts>,
    pub overall: MotaCounts,
    /// Per frame, (truth id, track id) pairs that matched.
    pub frame_matches: Vec<Vec<(u64, u64)>>,
}

impl MotaReport {
    pub fn mota(&self, class: ObjectClass) -> Option<f64> {
        self.per_class.get(&class).and_then(MotaCounts::mota)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MotaError {
    #[error("no ground-truth object-frames")]
    EmptyTruth,
    #[error("track output covers {tracks} frames but ground truth covers {truth}")]
    FrameMismatch { tracks: usize, truth: usize },
}

/// CLEAR-MOT accounting. Per frame and class, matches from the previous
/// frame are kept while their IoU stays at or above `iou_threshold`; the
/// rest are assigned by Hungarian on `1 - IoU`. A truth object whose
/// matched track differs from its last matched track is an identity switch.
pub fn evaluate_mota(
    tracks: &[Vec<LabeledBox>],
    truth: &[Vec<LabeledBox>],
    iou_threshold: f64,
) -> Result<MotaReport, MotaError> {
    if tracks.len() != truth.len() {
        return Err(MotaError::FrameMismatch {
            tracks: tracks.len(),
            truth: truth.len(),
        });
    }
    let mut per_class: BTreeMap<ObjectClass, MotaCounts> = BTreeMap::new();
    let mut previous: HashMap<u64, u64> = HashMap::new();
    let mut last_track: HashMap<u64, u64> = HashMap::new();
    let mut frame_matches = Vec::with_capacity(truth.len());
    for (gts, hyps) in truth.iter().zip(tracks) {
        let mut current: HashMap<u64, u64> = HashMap::new();
        for class in ObjectClass::ALL {
            let g: Vec<&LabeledBox> = gts.iter().filter(|b| b.class == class).collect();
            let h: Vec<&LabeledBox> = hyps.iter().filter(|b| b.class == class).collect();
            if g.is_empty() && h.is_empty() {
                continue;
            }
            let mut g_used = vec![false; g.len()];
            let mut h_used = vec![false; h.len()];
            let mut pairs = Vec::new();
            for (gi, gb) in g.iter().enumerate() {
                if let Some(&tid) = previous.get(&gb.id) {
                    if let Some(hi) = h.iter().position(|hb| hb.id == tid) {
                        if !h_used[hi] && gb.bbox.iou(&h[hi].bbox) >= iou_threshold {
                            g_used[gi] = true;
                            h_used[hi] = true;
                            pairs.push((gi, hi));
                        }
                    }
                }
            }
            let gi_free: Vec<usize> = (0..g.len()).filter(|&i| !g_used[i]).collect();
            let hi_free: Vec<usize> = (0..h.len()).filter(|&i| !h_used[i]).collect();
            let cost: Vec<Vec<f64>> = gi_free
                .iter()
                .map(|&gi| {
                    hi_free
                        .iter()
                        .map(|&hi| {
                            let iou = g[gi].bbox.iou(&h[hi].bbox);
                            if iou >= iou_threshold {
                                1.0 - iou
                            } else {
                                f64::INFINITY
                            }
                        })
                        .collect()
                })
                .collect();
            for (a, b) in hungarian(&cost) {
                pairs.push((gi_free[a], hi_free[b]));
            }

            let mut counts = MotaCounts {
                gt: g.len() as u64,
                matches: pairs.len() as u64,
                fn_: (g.len() - pairs.len()) as u64,
                fp: (h.len() - pairs.len()) as u64,
                idsw: 0,
            };
            for &(gi, hi) in &pairs {
                let (gid, tid) = (g[gi].id, h[hi].id);
                if let Some(&last) = last_track.get(&gid) {
                    if last != tid {
                        counts.idsw += 1;
                    }
                }
                last_track.insert(gid, tid);
                current.insert(gid, tid);
            }
            per_class.entry(class).or_default().add(&counts);
        }
        let mut fm: Vec<(u64, u64)> = current.iter().map(|(&g, &t)| (g, t)).collect();
        fm.sort_unstable();
        frame_matches.push(fm);
        previous = current;
    }
    per_class.retain(|_, c| c.gt > 0 || c.fp > 0);
    let mut overall = MotaCounts::default();
    for c in per_class.values() {
        overall.add(c);
    }
    if overall.gt == 0 {
        return Err(MotaError::EmptyTruth);
    }
    per_class.retain(|_, c| c.gt > 0);
    Ok(MotaReport {
        per_class,
        overall,
        frame_matches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lb(id: u64, x: f64) -> LabeledBox {
        LabeledBox {
            id,
            class: ObjectClass::Vehicle,
            bbox: PixelBox::new(x, 0.0, x + 10.0, 10.0),
        }
    }

    #[test]
    fn perfect_tracks() {
        let truth: Vec<Vec<LabeledBox>> = (0..5).map(|f| vec![lb(1, f as f64), lb(2, 100.0)]).collect();
        let tracks: Vec<Vec<LabeledBox>> = (0..5).map(|f| vec![lb(7, f as f64), lb(9, 100.0)]).collect();
        let r = evaluate_mota(&tracks, &truth, 0.5).unwrap();
        let c = r.per_class[&ObjectClass::Vehicle];
        assert_eq!((c.fn_, c.fp, c.idsw, c.gt), (0, 0, 0, 10));
        assert_eq!(r.mota(ObjectClass::Vehicle), Some(1.0));
        assert_eq!(r.frame_matches[0], vec![(1, 7), (2, 9)]);
    }

    #[test]
    fn formula_instance() {
        let c = MotaCounts {
            gt: 10,
            fn_: 1,
            fp: 1,
            idsw: 0,
            matches: 9,
        };
        assert!((c.mota().unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn counts_fn_fp_idsw() {
        // frame 0: gt 1 matched by track 5; frame 1: track 6 takes over
        // frame 2: nothing reported; a stray track far away in frame 2
        let truth = vec![vec![lb(1, 0.0)], vec![lb(1, 0.0)], vec![lb(1, 0.0)]];
        let tracks = vec![vec![lb(5, 0.0)], vec![lb(6, 0.0)], vec![lb(8, 200.0)]];
        let r = evaluate_mota(&tracks, &truth, 0.5).unwrap();
        let c = r.per_class[&ObjectClass::Vehicle];
        assert_eq!((c.gt, c.fn_, c.fp, c.idsw), (3, 1, 1, 1));
        assert!((r.mota(ObjectClass::Vehicle).unwrap() - 0.0).abs() < 1e-15);
    }

    #[test]
    fn previous_match_is_kept_over_better_iou() {
        // track 5 drifts but stays above threshold; track 6 sits exactly on
        // the truth. Carry-over keeps 5, 6 is a false positive.
        let truth = vec![vec![lb(1, 0.0)], vec![lb(1, 0.0)]];
        let tracks = vec![vec![lb(5, 0.0)], vec![lb(5, 2.0), lb(6, 0.0)]];
        let r = evaluate_mota(&tracks, &truth, 0.5).unwrap();
        let c = r.per_class[&ObjectClass::Vehicle];
        assert_eq!((c.idsw, c.fp), (0, 1));
    }

    #[test]
    fn empty_truth_and_no_tracks() {
        let none: Vec<Vec<LabeledBox>> = vec![vec![]; 3];
        assert_eq!(evaluate_mota(&none, &none, 0.5), Err(MotaError::EmptyTruth));
        let truth = vec![vec![lb(1, 0.0)]; 3];
        let r = evaluate_mota(&none, &truth, 0.5).unwrap();
        assert_eq!(r.mota(ObjectClass::Vehicle), Some(0.0));
        assert!(evaluate_mota(&none[..2], &truth, 0.5).is_err());
    }
}
