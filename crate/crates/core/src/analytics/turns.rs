use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::scenesim::{movement, Arm, ArmPolygons, Movement};
use crate::types::WorldPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TurnOutcome {
    Complete { entry: Arm, movement: Movement },
    Incomplete,
}

/// Entry arm of the first history point lying in an arm, exit arm of the
/// last. A track that starts or ends outside every arm, or that comes back
/// out the way it came without ever reaching the central box, is
/// incomplete.
pub fn classify_turn(history: &[WorldPoint], arms: &ArmPolygons) -> TurnOutcome {
    let located: Vec<Option<Arm>> = history.iter().map(|p| arms.locate(*p)).collect();
    let (Some(Some(entry)), Some(Some(exit))) = (located.first(), located.last()) else {
        return TurnOutcome::Incomplete;
    };
    let (entry, exit) = (*entry, *exit);
    if entry == exit {
        // a U-turn has to go through the central box; staying in one arm
        // is a fragment
        let first_out = located.iter().position(|a| *a != Some(entry));
        let last_out = located.iter().rposition(|a| *a != Some(entry));
        let crossed = match (first_out, last_out) {
            (Some(a), Some(b)) => located[a..=b].iter().any(|l| l.is_none()),
            _ => false,
        };
        if !crossed {
            return TurnOutcome::Incomplete;
        }
    }
    TurnOutcome::Complete {
        entry,
        movement: movement(entry, exit),
    }
}

/// Limits for joining a track that dies mid-junction to the track that
/// picks the same object up again.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StitchParams {
    /// Frames allowed between the end of one fragment and the start of the next.
    pub max_gap_frames: u64,
    /// Frames the next fragment may start before the previous one ends.
    pub max_overlap_frames: u64,
    /// Distance allowed between the fragments, before travel during a gap.
    pub max_jump_m: f64,
    pub max_step_m: f64,
}

impl Default for StitchParams {
    fn default() -> Self {
        Self {
            max_gap_frames: 30,
            max_overlap_frames: 60,
            max_jump_m: 3.0,
            max_step_m: 0.5,
        }
    }
}

type History = [(u64, WorldPoint)];

fn point_at(h: &History, frame: u64) -> WorldPoint {
    let i = h.partition_point(|x| x.0 < frame).min(h.len() - 1);
    h[i].1
}

/// Displacement over the last (`tail`) or first few points of a history.
fn heading(h: &History, tail: bool) -> (f64, f64) {
    const SPAN: usize = 10;
    let n = h.len();
    let (p, q) = if tail {
        (h[n.saturating_sub(SPAN + 1)].1, h[n - 1].1)
    } else {
        (h[0].1, h[SPAN.min(n - 1)].1)
    };
    (q.x - p.x, q.y - p.y)
}

fn link_cost(a: &History, b: &History, p: &StitchParams) -> Option<f64> {
    let (a0, a1) = (a.first()?.0, a.last()?.0);
    let b0 = b.first()?.0;
    if b0 <= a0 {
        return None;
    }
    // no reversals across a link
    let (ha, hb) = (heading(a, true), heading(b, false));
    let (na, nb) = (ha.0.hypot(ha.1), hb.0.hypot(hb.1));
    if na > 0.5 && nb > 0.5 && (ha.0 * hb.0 + ha.1 * hb.1) / (na * nb) < -0.5 {
        return None;
    }
    let d = if b0 <= a1 {
        if a1 - b0 > p.max_overlap_frames {
            return None;
        }
        point_at(a, b0).distance(&b[0].1)
    } else {
        let gap = b0 - a1;
        if gap > p.max_gap_frames {
            return None;
        }
        let d = a[a.len() - 1].1.distance(&b[0].1);
        if d > p.max_jump_m + p.max_step_m * gap as f64 {
            return None;
        }
        return Some(d);
    };
    (d <= p.max_jump_m).then_some(d)
}

/// Joins fragments into chains and returns the chained histories. A
/// fragment is only extended when it does not classify on its own; each
/// fragment has at most one successor and one predecessor, picked greedily
/// by distance.
pub fn stitch_fragments(
    fragments: &[Vec<(u64, WorldPoint)>],
    arms: &ArmPolygons,
    p: &StitchParams,
) -> Vec<Vec<(u64, WorldPoint)>> {
    let open: Vec<bool> = fragments
        .iter()
        .map(|f| {
            let pts: Vec<WorldPoint> = f.iter().map(|x| x.1).collect();
            classify_turn(&pts, arms) == TurnOutcome::Incomplete
        })
        .collect();
    let mut links = Vec::new();
    for (i, a) in fragments.iter().enumerate() {
        if !open[i] || a.is_empty() {
            continue;
        }
        for (j, b) in fragments.iter().enumerate() {
            if i != j && !b.is_empty() {
                if let Some(c) = link_cost(a, b, p) {
                    links.push((c, i, j));
                }
            }
        }
    }
    links.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut next = vec![None; fragments.len()];
    let mut has_prev = vec![false; fragments.len()];
    for (_, i, j) in links {
        if next[i].is_none() && !has_prev[j] {
            next[i] = Some(j);
            has_prev[j] = true;
        }
    }
    let mut out = Vec::new();
    for start in 0..fragments.len() {
        if has_prev[start] || fragments[start].is_empty() {
            continue;
        }
        let mut pts: Vec<(u64, WorldPoint)> = Vec::new();
        let mut cur = Some(start);
        while let Some(k) = cur {
            for &(f, w) in &fragments[k] {
                if pts.last().is_none_or(|l| f > l.0) {
                    pts.push((f, w));
                }
            }
            cur = next[k];
        }
        out.push(pts);
    }
    out
}

/// Fraction of `a`'s frames at which `b` was updated within `radius`.
fn shadowed_fraction(a: &History, b: &History, radius: f64) -> f64 {
    let near = a
        .iter()
        .filter(|(f, w)| {
            b.binary_search_by_key(f, |x| x.0)
                .is_ok_and(|i| b[i].1.distance(w) <= radius)
        })
        .count();
    near as f64 / a.len().max(1) as f64
}

/// Counts movements over stitched track histories. A chain that mostly
/// shadows a longer chain with the same movement is a duplicate track of
/// the same object and is counted once.
pub fn count_turns(fragments: &[Vec<(u64, WorldPoint)>], arms: &ArmPolygons, p: &StitchParams) -> TurnCount {
    type Chain = (Vec<(u64, WorldPoint)>, Arm, Movement);
    let chains: Vec<Chain> = stitch_fragments(fragments, arms, p)
        .into_iter()
        .filter_map(|h| {
            let pts: Vec<WorldPoint> = h.iter().map(|x| x.1).collect();
            match classify_turn(&pts, arms) {
                TurnOutcome::Complete { entry, movement } => Some((h, entry, movement)),
                TurnOutcome::Incomplete => None,
            }
        })
        .collect();
    let mut count = TurnCount::default();
    for (i, (h, entry, movement)) in chains.iter().enumerate() {
        let duplicate = chains.iter().enumerate().any(|(j, (g, e, m))| {
            j != i
                && (e, m) == (entry, movement)
                && (g.len(), j) > (h.len(), i)
                && shadowed_fraction(h, g, p.max_jump_m) >= 0.5
        });
        if !duplicate {
            count.record(*entry, *movement);
        }
    }
    count
}

fn movement_index(m: Movement) -> usize {
    Movement::ALL.iter().position(|x| *x == m).expect("listed")
}

/// Counters per (entry arm, movement).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TurnCount {
    counts: [[u64; 4]; 4],
}

impl TurnCount {
    pub fn record(&mut self, entry: Arm, m: Movement) {
        self.counts[entry.index()][movement_index(m)] += 1;
    }

    pub fn get(&self, entry: Arm, m: Movement) -> u64 {
        self.counts[entry.index()][movement_index(m)]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// `1 - sum |predicted - truth| / sum truth` over all 16 cells.
    pub fn accuracy_against(&self, truth: &TurnCount) -> Option<f64> {
        let total = truth.total();
        if total == 0 {
            return None;
        }
        let err: u64 = self
            .counts
            .iter()
            .flatten()
            .zip(truth.counts.iter().flatten())
            .map(|(a, b)| a.abs_diff(*b))
            .sum();
        Some(1.0 - err as f64 / total as f64)
    }

    /// 4 x 4 table: one row per entry arm, one column per movement.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        write!(w, "entry")?;
        for m in Movement::ALL {
            write!(w, ",{m}")?;
        }
        writeln!(w)?;
        for a in Arm::ALL {
            write!(w, "{a}")?;
            for m in Movement::ALL {
                write!(w, ",{}", self.get(a, m))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arms() -> ArmPolygons {
        ArmPolygons::standard(8.0, 22.0)
    }

    fn line(a: (f64, f64), b: (f64, f64), n: usize) -> Vec<WorldPoint> {
        (0..=n)
            .map(|i| {
                let t = i as f64 / n as f64;
                WorldPoint::new(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
            })
            .collect()
    }

    #[test]
    fn north_to_south_is_straight() {
        let h = line((-4.0, 20.0), (-4.0, -20.0), 40);
        assert_eq!(
            classify_turn(&h, &arms()),
            TurnOutcome::Complete {
                entry: Arm::North,
                movement: Movement::Straight
            }
        );
    }

    #[test]
    fn staying_in_arm_is_incomplete() {
        let h = line((-4.0, 20.0), (-4.0, 12.0), 10);
        assert_eq!(classify_turn(&h, &arms()), TurnOutcome::Incomplete);
        let h = line((-4.0, 20.0), (-4.0, 0.0), 10);
        assert_eq!(classify_turn(&h, &arms()), TurnOutcome::Incomplete);
    }

    #[test]
    fn u_turn_through_center() {
        let mut h = line((-4.0, 20.0), (-4.0, 2.0), 10);
        h.extend(line((4.0, 2.0), (4.0, 20.0), 10));
        assert_eq!(
            classify_turn(&h, &arms()),
            TurnOutcome::Complete {
                entry: Arm::North,
                movement: Movement::UTurn
            }
        );
    }

    fn timed(pts: Vec<WorldPoint>, start: u64) -> Vec<(u64, WorldPoint)> {
        pts.into_iter().enumerate().map(|(i, p)| (start + i as u64, p)).collect()
    }

    #[test]
    fn fragments_stitch_across_gap() {
        let a = timed(line((-20.0, -4.0), (-2.0, -4.0), 18), 0);
        let b = timed(line((-1.0, -4.0), (-1.0, 20.0), 24), 22);
        let other = timed(line((20.0, 4.0), (-20.0, 4.0), 40), 0);
        let c = count_turns(&[a.clone(), b.clone(), other.clone()], &arms(), &StitchParams::default());
        assert_eq!(c.get(Arm::West, Movement::Left), 1);
        assert_eq!(c.get(Arm::East, Movement::Straight), 1);
        assert_eq!(c.total(), 2);
        // too far apart in time
        let late = timed(line((-1.0, -4.0), (-1.0, 20.0), 24), 200);
        assert_eq!(count_turns(&[a, late], &arms(), &StitchParams::default()).total(), 0);
    }

    #[test]
    fn complete_tracks_are_not_extended() {
        let a = timed(line((-20.0, -4.0), (20.0, -4.0), 40), 0);
        let b = timed(line((20.0, -3.0), (20.0, -3.0), 5), 41);
        let chains = stitch_fragments(&[a, b], &arms(), &StitchParams::default());
        assert_eq!(chains.len(), 2);
    }

    #[test]
    fn shadow_track_counted_once() {
        let a = timed(line((-20.0, -4.0), (20.0, -4.0), 40), 0);
        let b = timed(line((-19.0, -4.5), (19.5, -4.5), 38), 1);
        let c = count_turns(&[a, b], &arms(), &StitchParams::default());
        assert_eq!(c.total(), 1);
    }

    #[test]
    fn counting_accuracy() {
        let mut truth = TurnCount::default();
        let mut pred = TurnCount::default();
        for _ in 0..10 {
            truth.record(Arm::North, Movement::Left);
        }
        for _ in 0..9 {
            pred.record(Arm::North, Movement::Left);
        }
        pred.record(Arm::East, Movement::Right);
        assert!((pred.accuracy_against(&truth).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(pred.accuracy_against(&TurnCount::default()), None);
        let mut csv = Vec::new();
        pred.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("entry,left,right,straight,u_turn\nN,9,0,0,0\n"));
    }
}
