use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::scenesim::FrameTruth;
use crate::types::{ObjectClass, WorldPoint};

/// Pedestrian world positions in one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PositionFrame {
    pub frame_index: u64,
    pub positions: Vec<(u64, WorldPoint)>,
}

/// One pair too close in one frame. `pair.0 < pair.1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairFrame {
    pub frame_index: u64,
    pub pair: (u64, u64),
    pub distance: f64,
}

fn ordered(a: u64, b: u64) -> (u64, u64) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub fn pairwise_violations(frames: &[PositionFrame], threshold_m: f64) -> Vec<PairFrame> {
    let mut out = Vec::new();
    for f in frames {
        let p = &f.positions;
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                let d = p[i].1.distance(&p[j].1);
                if d < threshold_m {
                    out.push(PairFrame {
                        frame_index: f.frame_index,
                        pair: ordered(p[i].0, p[j].0),
                        distance: d,
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupParams {
    /// Co-visible frames per window.
    pub window: usize,
    pub d_group_m: f64,
    pub sigma_max_m: f64,
    pub cos_min: f64,
    /// Below this speed a walker counts as standing still.
    pub stationary_mps: f64,
    /// Frames over which headings are differenced.
    pub velocity_span: u64,
    pub frame_rate: f64,
}

impl Default for GroupParams {
    fn default() -> Self {
        Self {
            window: 30,
            d_group_m: 1.5,
            sigma_max_m: 0.4,
            cos_min: 0.9,
            stationary_mps: 0.2,
            velocity_span: 10,
            frame_rate: 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupLabel {
    pub pair: (u64, u64),
    pub is_safe_group: bool,
    /// Statistics over every co-visible frame of the pair.
    pub mean_distance: f64,
    pub distance_std: f64,
    pub velocity_cosine: f64,
    pub covisible_frames: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairOutcome {
    Label(GroupLabel),
    /// Seen together for fewer than a window of frames; never a group.
    InsufficientOverlap { frames: usize },
}

impl PairOutcome {
    pub fn is_safe_group(&self) -> bool {
        matches!(self, PairOutcome::Label(l) if l.is_safe_group)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroupValidation {
    pub outcomes: BTreeMap<(u64, u64), PairOutcome>,
    pub kept: Vec<PairFrame>,
    pub suppressed: Vec<PairFrame>,
}

/// Track histories keyed by track id, each sorted by frame.
pub type Histories = HashMap<u64, Vec<(u64, WorldPoint)>>;

/// Per-history-entry velocity (m/s), differenced over `span` frames.
fn velocities(h: &[(u64, WorldPoint)], span: u64, frame_rate: f64) -> Vec<(f64, f64)> {
    let n = h.len();
    let mut out = Vec::with_capacity(n);
    let mut back = 0usize;
    for i in 0..n {
        while back + 1 < i && h[back + 1].0 + span <= h[i].0 {
            back += 1;
        }
        let (a, b) = if back < i {
            (back, i)
        } else {
            // start of the history: look forward instead
            let fwd = (i + 1..n).find(|&k| h[k].0 >= h[i].0 + span).unwrap_or(n - 1);
            (i, fwd)
        };
        if a == b {
            out.push((0.0, 0.0));
            continue;
        }
        let dt = (h[b].0 - h[a].0) as f64 / frame_rate;
        out.push(((h[b].1.x - h[a].1.x) / dt, (h[b].1.y - h[a].1.y) / dt));
    }
    out
}

fn cosine(a: (f64, f64), b: (f64, f64), still: f64) -> f64 {
    let na = a.0.hypot(a.1);
    let nb = b.0.hypot(b.1);
    match (na < still, nb < still) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (a.0 * b.0 + a.1 * b.1) / (na * nb),
    }
}

/// Decides which close pairs are walking groups. A pair is a safe group
/// when some window of `window` consecutive co-visible frames has mean
/// distance <= `d_group_m`, distance std <= `sigma_max_m` and mean velocity
/// cosine >= `cos_min`; all raw flags of a safe group are suppressed.
pub fn validate_groups(raw: &[PairFrame], histories: &Histories, params: &GroupParams) -> GroupValidation {
    let mut by_pair: BTreeMap<(u64, u64), Vec<usize>> = BTreeMap::new();
    for (i, r) in raw.iter().enumerate() {
        by_pair.entry(ordered(r.pair.0, r.pair.1)).or_default().push(i);
    }
    let mut vel_cache: HashMap<u64, Vec<(f64, f64)>> = HashMap::new();
    let mut suppressed_idx = vec![false; raw.len()];
    let mut outcomes = BTreeMap::new();
    let empty = Vec::new();
    for (&pair, idxs) in &by_pair {
        let ha = histories.get(&pair.0).unwrap_or(&empty);
        let hb = histories.get(&pair.1).unwrap_or(&empty);
        for id in [pair.0, pair.1] {
            vel_cache.entry(id).or_insert_with(|| {
                velocities(histories.get(&id).unwrap_or(&empty), params.velocity_span, params.frame_rate)
            });
        }
        let (va, vb) = (&vel_cache[&pair.0], &vel_cache[&pair.1]);
        // co-visible frames: merge the two sorted histories
        let mut frames = Vec::new();
        let mut dist = Vec::new();
        let mut cos = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < ha.len() && j < hb.len() {
            match ha[i].0.cmp(&hb[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    frames.push(ha[i].0);
                    dist.push(ha[i].1.distance(&hb[j].1));
                    cos.push(cosine(va[i], vb[j], params.stationary_mps));
                    i += 1;
                    j += 1;
                }
            }
        }
        let n = frames.len();
        let w = params.window.max(1);
        if n < w {
            outcomes.insert(pair, PairOutcome::InsufficientOverlap { frames: n });
            continue;
        }
        let prefix = |v: &[f64]| {
            let mut p = vec![0.0; v.len() + 1];
            for (k, x) in v.iter().enumerate() {
                p[k + 1] = p[k] + x;
            }
            p
        };
        let sq: Vec<f64> = dist.iter().map(|d| d * d).collect();
        let (pd, pq, pc) = (prefix(&dist), prefix(&sq), prefix(&cos));
        let wf = w as f64;
        let any = (0..=n - w).any(|s| {
            let e = s + w;
            let mean = (pd[e] - pd[s]) / wf;
            let var = ((pq[e] - pq[s]) / wf - mean * mean).max(0.0);
            let mc = (pc[e] - pc[s]) / wf;
            mean <= params.d_group_m && var.sqrt() <= params.sigma_max_m && mc >= params.cos_min
        });
        if any {
            for &ri in idxs {
                suppressed_idx[ri] = true;
            }
        }
        let nf = n as f64;
        let mean = pd[n] / nf;
        outcomes.insert(
            pair,
            PairOutcome::Label(GroupLabel {
                pair,
                is_safe_group: any,
                mean_distance: mean,
                distance_std: (pq[n] / nf - mean * mean).max(0.0).sqrt(),
                velocity_cosine: pc[n] / nf,
                covisible_frames: n,
            }),
        );
    }
    let mut kept = Vec::new();
    let mut suppressed = Vec::new();
    for (r, s) in raw.iter().zip(suppressed_idx) {
        if s {
            suppressed.push(*r);
        } else {
            kept.push(*r);
        }
    }
    GroupValidation {
        outcomes,
        kept,
        suppressed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViolationEvent {
    pub pair: (u64, u64),
    pub start_frame: u64,
    pub end_frame: u64,
    pub min_distance: f64,
}

impl ViolationEvent {
    pub fn frames(&self) -> u64 {
        self.end_frame - self.start_frame + 1
    }

    pub fn duration_s(&self, frame_rate: f64) -> f64 {
        self.frames() as f64 / frame_rate
    }
}

/// Streaming event merger: feed pair-frames in non-decreasing frame order,
/// in chunks of any size.
#[derive(Debug, Clone)]
pub struct EventBuilder {
    max_gap: u64,
    open: HashMap<(u64, u64), ViolationEvent>,
    closed: Vec<ViolationEvent>,
}

impl EventBuilder {
    pub fn new(max_gap_frames: u64) -> Self {
        Self {
            max_gap: max_gap_frames,
            open: HashMap::new(),
            closed: Vec::new(),
        }
    }

    pub fn push(&mut self, p: &PairFrame) {
        let pair = ordered(p.pair.0, p.pair.1);
        match self.open.get_mut(&pair) {
            Some(e) if p.frame_index <= e.end_frame + self.max_gap + 1 => {
                e.end_frame = e.end_frame.max(p.frame_index);
                e.min_distance = e.min_distance.min(p.distance);
            }
            _ => {
                let fresh = ViolationEvent {
                    pair,
                    start_frame: p.frame_index,
                    end_frame: p.frame_index,
                    min_distance: p.distance,
                };
                if let Some(old) = self.open.insert(pair, fresh) {
                    self.closed.push(old);
                }
            }
        }
    }

    pub fn extend<'a>(&mut self, frames: impl IntoIterator<Item = &'a PairFrame>) {
        for p in frames {
            self.push(p);
        }
    }

    /// Closed events sorted by (start frame, pair).
    pub fn finish(mut self) -> Vec<ViolationEvent> {
        self.closed.extend(self.open.into_values());
        self.closed.sort_by_key(|e| (e.start_frame, e.pair));
        self.closed
    }
}

/// Merges flagged frames of each pair into events, bridging gaps of up to
/// `max_gap_frames` missing frames.
pub fn merge_events(flags: &[PairFrame], max_gap_frames: u64) -> Vec<ViolationEvent> {
    let mut sorted = flags.to_vec();
    sorted.sort_by_key(|p| p.frame_index);
    let mut b = EventBuilder::new(max_gap_frames);
    b.extend(&sorted);
    b.finish()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub lower_s: f64,
    pub count: u64,
}

/// Event durations binned by `floor(duration / bin_s)`, from the first to
/// the last non-empty bin. Events shorter than `min_duration_s` are left out.
pub fn violation_durations(
    events: &[ViolationEvent],
    frame_rate: f64,
    bin_s: f64,
    min_duration_s: f64,
) -> Vec<HistogramBin> {
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for e in events {
        let d = e.duration_s(frame_rate);
        if d < min_duration_s {
            continue;
        }
        *counts.entry((d / bin_s + 1e-9).floor() as u64).or_default() += 1;
    }
    let (Some(&lo), Some(&hi)) = (counts.keys().next(), counts.keys().next_back()) else {
        return Vec::new();
    };
    (lo..=hi)
        .map(|b| HistogramBin {
            lower_s: b as f64 * bin_s,
            count: counts.get(&b).copied().unwrap_or(0),
        })
        .collect()
}

pub fn write_histogram_csv(mut w: impl Write, bins: &[HistogramBin], bin_s: f64) -> std::io::Result<()> {
    writeln!(w, "lower_s,upper_s,count")?;
    for b in bins {
        writeln!(w, "{},{},{}", b.lower_s, b.lower_s + bin_s, b.count)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct F1Score {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl F1Score {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

/// Set-based precision / recall / F1 over an aligned domain.
pub fn f1<K: Eq + std::hash::Hash>(predicted: &HashSet<K>, truth: &HashSet<K>) -> F1Score {
    let tp = predicted.intersection(truth).count() as u64;
    F1Score::from_counts(tp, predicted.len() as u64 - tp, truth.len() as u64 - tp)
}

/// (frame, truth id, truth id) with the ids ordered.
pub type TruthPairFrame = (u64, u64, u64);

/// Ground-truth violations: pedestrian pairs closer than `threshold_m` that
/// do not belong to the same group.
pub fn truth_violations(frames: &[FrameTruth], threshold_m: f64) -> HashSet<TruthPairFrame> {
    let mut out = HashSet::new();
    for f in frames {
        let peds: Vec<_> = f.objects.iter().filter(|o| o.class == ObjectClass::Pedestrian).collect();
        for i in 0..peds.len() {
            for j in i + 1..peds.len() {
                let (a, b) = (peds[i], peds[j]);
                let same_group = a.group_id.is_some() && a.group_id == b.group_id;
                if !same_group && a.pos.distance(&b.pos) < threshold_m {
                    let (x, y) = ordered(a.id, b.id);
                    out.insert((f.frame_index, x, y));
                }
            }
        }
    }
    out
}

/// Scores track-level flags against truth. Each flagged pair-frame is
/// mapped to truth ids through that frame's track-to-truth matching; flags
/// involving an unmatched track count as false positives.
pub fn score_violations(
    flags: &[PairFrame],
    frame_matches: &HashMap<u64, HashMap<u64, u64>>,
    truth: &HashSet<TruthPairFrame>,
) -> F1Score {
    let mut mapped = HashSet::new();
    let mut unmapped = 0u64;
    for p in flags {
        let m = frame_matches.get(&p.frame_index);
        let ta = m.and_then(|m| m.get(&p.pair.0));
        let tb = m.and_then(|m| m.get(&p.pair.1));
        match (ta, tb) {
            (Some(&a), Some(&b)) if a != b => {
                let (x, y) = ordered(a, b);
                if !mapped.insert((p.frame_index, x, y)) {
                    unmapped += 1;
                }
            }
            _ => unmapped += 1,
        }
    }
    let tp = mapped.intersection(truth).count() as u64;
    let fp = mapped.len() as u64 - tp + unmapped;
    F1Score::from_counts(tp, fp, truth.len() as u64 - tp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(i: u64, pts: &[(u64, f64, f64)]) -> PositionFrame {
        PositionFrame {
            frame_index: i,
            positions: pts.iter().map(|&(id, x, y)| (id, WorldPoint::new(x, y))).collect(),
        }
    }

    #[test]
    fn threshold_is_strict() {
        assert_eq!(pairwise_violations(&[frame(0, &[(1, 0.0, 0.0), (2, 0.0, 1.5)])], 2.0).len(), 1);
        assert!(pairwise_violations(&[frame(0, &[(1, 0.0, 0.0), (2, 0.0, 2.0)])], 2.0).is_empty());
    }

    #[test]
    fn three_close_walkers() {
        let f = frame(0, &[(3, 0.0, 0.0), (1, 0.5, 0.0), (2, 0.0, 0.5)]);
        let v = pairwise_violations(std::slice::from_ref(&f), 2.0);
        // oracle: every unordered pair of the three
        let mut oracle = 0;
        for i in 0..3 {
            for j in i + 1..3 {
                if f.positions[i].1.distance(&f.positions[j].1) < 2.0 {
                    oracle += 1;
                }
            }
        }
        assert_eq!(v.len(), oracle);
        assert_eq!(oracle, 3);
        assert!(v.iter().all(|p| p.pair.0 < p.pair.1));
    }

    fn walk(id: u64, start: (f64, f64), vel: (f64, f64), frames: u64) -> (u64, Vec<(u64, WorldPoint)>) {
        (
            id,
            (0..frames)
                .map(|f| {
                    let t = f as f64 / 30.0;
                    (f, WorldPoint::new(start.0 + vel.0 * t, start.1 + vel.1 * t))
                })
                .collect(),
        )
    }

    fn raw_from(h: &Histories, frames: u64) -> Vec<PairFrame> {
        let pf: Vec<PositionFrame> = (0..frames)
            .map(|f| PositionFrame {
                frame_index: f,
                positions: h
                    .iter()
                    .filter_map(|(id, v)| v.iter().find(|x| x.0 == f).map(|x| (*id, x.1)))
                    .collect(),
            })
            .collect();
        pairwise_violations(&pf, 2.0)
    }

    #[test]
    fn co_walkers_are_a_group() {
        let h: Histories = [walk(1, (0.0, 0.0), (1.2, 0.0), 90), walk(2, (-0.7, 0.0), (1.2, 0.0), 90)].into();
        let raw = raw_from(&h, 90);
        assert_eq!(raw.len(), 90);
        let g = validate_groups(&raw, &h, &GroupParams::default());
        assert!(g.outcomes[&(1, 2)].is_safe_group());
        assert!(g.kept.is_empty());
        assert_eq!(g.suppressed.len(), 90);
    }

    #[test]
    fn opposite_walkers_are_not_a_group() {
        let h: Histories = [walk(1, (-3.0, 0.0), (1.2, 0.0), 150), walk(2, (3.0, 1.0), (-1.2, 0.0), 150)].into();
        let raw = raw_from(&h, 150);
        assert!(!raw.is_empty());
        let g = validate_groups(&raw, &h, &GroupParams::default());
        let PairOutcome::Label(l) = g.outcomes[&(1, 2)] else { panic!() };
        assert!(!l.is_safe_group);
        assert!(l.velocity_cosine < -0.99);
        assert_eq!(g.kept.len(), raw.len());
    }

    #[test]
    fn short_overlap() {
        let h: Histories = [walk(1, (0.0, 0.0), (1.2, 0.0), 10), walk(2, (-0.7, 0.0), (1.2, 0.0), 10)].into();
        let raw = raw_from(&h, 10);
        let g = validate_groups(&raw, &h, &GroupParams::default());
        assert_eq!(g.outcomes[&(1, 2)], PairOutcome::InsufficientOverlap { frames: 10 });
        assert_eq!(g.kept.len(), 10);
    }

    #[test]
    fn symmetric_in_pair_order() {
        let h: Histories = [walk(1, (0.0, 0.0), (1.2, 0.0), 60), walk(2, (-0.7, 0.3), (1.1, 0.1), 60)].into();
        let raw = raw_from(&h, 60);
        let flipped: Vec<PairFrame> = raw
            .iter()
            .map(|p| PairFrame {
                pair: (p.pair.1, p.pair.0),
                ..*p
            })
            .collect();
        let p = GroupParams::default();
        assert_eq!(validate_groups(&raw, &h, &p).outcomes, validate_groups(&flipped, &h, &p).outcomes);
    }

    fn pf(frame: u64) -> PairFrame {
        PairFrame {
            frame_index: frame,
            pair: (1, 2),
            distance: 1.0,
        }
    }

    #[test]
    fn gap_merge() {
        // frames 0..=4, gap of one frame (5), frames 6..=9
        let flags: Vec<PairFrame> = (0..5).chain(6..10).map(pf).collect();
        let ev = merge_events(&flags, 2);
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].start_frame, ev[0].end_frame), (0, 9));
        // a three-frame gap splits
        let flags: Vec<PairFrame> = (0..5).chain(8..10).map(pf).collect();
        assert_eq!(merge_events(&flags, 2).len(), 2);
    }

    #[test]
    fn rechunking_invariance() {
        let flags: Vec<PairFrame> = (0..5).chain(7..9).chain(20..25).map(pf).collect();
        let whole = merge_events(&flags, 2);
        let mut b = EventBuilder::new(2);
        for chunk in flags.chunks(3) {
            b.extend(chunk);
        }
        assert_eq!(b.finish(), whole);
    }

    #[test]
    fn histogram_bins() {
        let ev = merge_events(&(0..30).map(pf).collect::<Vec<_>>(), 2);
        let h = violation_durations(&ev, 30.0, 1.0, 0.0);
        assert_eq!(
            h,
            vec![HistogramBin {
                lower_s: 1.0,
                count: 1
            }]
        );
        assert!(violation_durations(&[], 30.0, 1.0, 0.0).is_empty());
        assert!(violation_durations(&ev, 30.0, 1.0, 2.0).is_empty());
    }

    #[test]
    fn f1_instances() {
        let s = F1Score::from_counts(8, 2, 2);
        assert!((s.precision - 0.8).abs() < 1e-12 && (s.recall - 0.8).abs() < 1e-12 && (s.f1 - 0.8).abs() < 1e-12);
        let t: HashSet<u32> = [1, 2, 3].into();
        assert_eq!(f1(&t, &t).f1, 1.0);
        assert_eq!(f1(&HashSet::new(), &t).f1, 0.0);
    }
}
