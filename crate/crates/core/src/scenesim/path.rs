//! Routes as straight segments joined by circular fillets.

use std::f64::consts::PI;

use crate::types::WorldPoint;

#[derive(Debug, Clone, PartialEq)]
enum Segment {
    Line {
        from: WorldPoint,
        dir: (f64, f64),
        len: f64,
    },
    Arc {
        center: WorldPoint,
        radius: f64,
        start_angle: f64,
        /// +1 counter-clockwise (left turn), -1 clockwise.
        sweep_sign: f64,
        sweep: f64,
    },
}

impl Segment {
    fn length(&self) -> f64 {
        match *self {
            Segment::Line { len, .. } => len,
            Segment::Arc { radius, sweep, .. } => radius * sweep,
        }
    }

    fn pose(&self, s: f64) -> (WorldPoint, (f64, f64)) {
        match *self {
            Segment::Line { from, dir, .. } => (WorldPoint::new(from.x + dir.0 * s, from.y + dir.1 * s), dir),
            Segment::Arc {
                center,
                radius,
                start_angle,
                sweep_sign,
                ..
            } => {
                let a = start_angle + sweep_sign * s / radius;
                let p = WorldPoint::new(center.x + radius * a.cos(), center.y + radius * a.sin());
                // tangent is the radial direction rotated by +-90 degrees
                let t = (-sweep_sign * a.sin(), sweep_sign * a.cos());
                (p, t)
            }
        }
    }
}

/// A curve speed restriction over `[start, end]` of path length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSpan {
    pub start: f64,
    pub end: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    segments: Vec<Segment>,
    cumulative: Vec<f64>,
    length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPose {
    pub position: WorldPoint,
    /// Unit tangent.
    pub heading: (f64, f64),
}

impl Path {
    /// Polyline through `waypoints`, with every interior corner replaced by a
    /// tangent circular arc of radius `fillet` (shrunk if the adjoining legs
    /// are too short).
    pub fn filleted(waypoints: &[WorldPoint], fillet: f64) -> Path {
        assert!(waypoints.len() >= 2, "path needs two waypoints");
        let mut segments = Vec::new();
        let mut cursor = waypoints[0];
        for i in 1..waypoints.len() {
            let cur = waypoints[i];
            let dir_in = unit(cursor, cur);
            if i + 1 == waypoints.len() {
                push_line(&mut segments, cursor, cur);
                break;
            }
            let next = waypoints[i + 1];
            let dir_out = unit(cur, next);
            let cross = dir_in.0 * dir_out.1 - dir_in.1 * dir_out.0;
            let dot = (dir_in.0 * dir_out.0 + dir_in.1 * dir_out.1).clamp(-1.0, 1.0);
            let turn = cross.atan2(dot);
            if turn.abs() < 1e-9 {
                continue;
            }
            let leg_in = cursor.distance(&cur);
            let leg_out = cur.distance(&next) / 2.0;
            let half = turn.abs() / 2.0;
            let mut radius = fillet;
            let mut tangent = radius * half.tan();
            let limit = leg_in.min(leg_out);
            if tangent > limit {
                tangent = limit;
                radius = tangent / half.tan();
            }
            let arc_start = WorldPoint::new(cur.x - dir_in.0 * tangent, cur.y - dir_in.1 * tangent);
            push_line(&mut segments, cursor, arc_start);
            let sign = turn.signum();
            // center lies on the left normal for a left turn
            let normal = (-dir_in.1 * sign, dir_in.0 * sign);
            let center = WorldPoint::new(arc_start.x + normal.0 * radius, arc_start.y + normal.1 * radius);
            let start_angle = (arc_start.y - center.y).atan2(arc_start.x - center.x);
            segments.push(Segment::Arc {
                center,
                radius,
                start_angle,
                sweep_sign: sign,
                sweep: turn.abs(),
            });
            cursor = WorldPoint::new(cur.x + dir_out.0 * tangent, cur.y + dir_out.1 * tangent);
        }
        let mut cumulative = Vec::with_capacity(segments.len());
        let mut acc = 0.0;
        for s in &segments {
            cumulative.push(acc);
            acc += s.length();
        }
        Path {
            segments,
            cumulative,
            length: acc,
        }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Pose at arc length `s`. Values outside `[0, length]` extrapolate
    /// along the first/last tangent.
    pub fn pose(&self, s: f64) -> PathPose {
        if s <= 0.0 {
            let (p, t) = self.segments[0].pose(0.0);
            return PathPose {
                position: WorldPoint::new(p.x + t.0 * s, p.y + t.1 * s),
                heading: t,
            };
        }
        let idx = match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let seg = &self.segments[idx];
        let local = s - self.cumulative[idx];
        if idx + 1 == self.segments.len() && local > seg.length() {
            let (p, t) = seg.pose(seg.length());
            let extra = local - seg.length();
            return PathPose {
                position: WorldPoint::new(p.x + t.0 * extra, p.y + t.1 * extra),
                heading: t,
            };
        }
        let (position, heading) = seg.pose(local);
        PathPose { position, heading }
    }

    pub fn start(&self) -> WorldPoint {
        self.pose(0.0).position
    }

    pub fn end(&self) -> WorldPoint {
        self.pose(self.length).position
    }

    pub fn curves(&self) -> Vec<CurveSpan> {
        self.segments
            .iter()
            .zip(&self.cumulative)
            .filter_map(|(seg, &start)| match *seg {
                Segment::Arc { radius, .. } => Some(CurveSpan {
                    start,
                    end: start + seg.length(),
                    radius,
                }),
                Segment::Line { .. } => None,
            })
            .collect()
    }

    /// Signed total heading change, radians (positive = counter-clockwise).
    pub fn total_turn(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| match *s {
                Segment::Arc { sweep, sweep_sign, .. } => sweep * sweep_sign,
                Segment::Line { .. } => 0.0,
            })
            .sum()
    }
}

fn unit(a: WorldPoint, b: WorldPoint) -> (f64, f64) {
    let d = a.distance(&b);
    ((b.x - a.x) / d, (b.y - a.y) / d)
}

fn push_line(segments: &mut Vec<Segment>, from: WorldPoint, to: WorldPoint) {
    let len = from.distance(&to);
    if len > 1e-12 {
        segments.push(Segment::Line {
            from,
            dir: unit(from, to),
            len,
        });
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wp(x: f64, y: f64) -> WorldPoint {
        WorldPoint::new(x, y)
    }

    #[test]
    fn straight_path() {
        let p = Path::filleted(&[wp(0.0, 10.0), wp(0.0, -10.0)], 4.0);
        assert!((p.length() - 20.0).abs() < 1e-12);
        let pose = p.pose(5.0);
        assert!((pose.position.y - 5.0).abs() < 1e-12);
        assert_eq!(pose.heading, (0.0, -1.0));
        assert!(p.curves().is_empty());
    }

    #[test]
    fn right_angle_fillet_is_tangent_and_continuous() {
        // heading south then west: a right (clockwise) turn
        let p = Path::filleted(&[wp(-4.0, 22.0), wp(-4.0, 4.0), wp(-22.0, 4.0)], 4.0);
        let curves = p.curves();
        assert_eq!(curves.len(), 1);
        assert!((curves[0].radius - 4.0).abs() < 1e-12);
        let expected = 14.0 + 4.0 * std::f64::consts::FRAC_PI_2 + 14.0;
        assert!((p.length() - expected).abs() < 1e-9);
        assert!(p.total_turn() < 0.0);
        let mut prev = p.pose(0.0).position;
        let n = 2000;
        for k in 1..=n {
            let s = p.length() * k as f64 / n as f64;
            let cur = p.pose(s).position;
            let step = p.length() / n as f64;
            assert!(cur.distance(&prev) <= step + 1e-9);
            prev = cur;
        }
        let end = p.end();
        assert!((end.x + 22.0).abs() < 1e-9 && (end.y - 4.0).abs() < 1e-9);
    }

    #[test]
    fn semicircle_u_turn() {
        let p = Path::filleted(&[wp(-4.0, 22.0), wp(-4.0, 4.0), wp(4.0, 4.0), wp(4.0, 22.0)], 4.0);
        assert!((p.total_turn() - std::f64::consts::PI).abs() < 1e-9);
        // lowest point of the semicircle
        let mid = p.pose(p.length() / 2.0).position;
        assert!(mid.x.abs() < 1e-9 && (mid.y - 4.0).abs() < 1e-9);
    }

    #[test]
    fn extrapolation_beyond_ends() {
        let p = Path::filleted(&[wp(0.0, 0.0), wp(10.0, 0.0)], 1.0);
        assert!((p.pose(-2.0).position.x + 2.0).abs() < 1e-12);
        assert!((p.pose(12.0).position.x - 12.0).abs() < 1e-12);
    }
}
