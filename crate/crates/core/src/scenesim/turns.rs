use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::types::WorldPoint;

/// Intersection approach, in clockwise order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    North,
    East,
    South,
    West,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::North, Arm::East, Arm::South, Arm::West];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Arm {
        Arm::ALL[i % 4]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Arm::North => "N",
            Arm::East => "E",
            Arm::South => "S",
            Arm::West => "W",
        }
    }

    /// Rotate a north-arm coordinate into this arm's frame (clockwise
    /// quarter turns).
    pub fn rotate(self, p: WorldPoint) -> WorldPoint {
        let mut q = p;
        for _ in 0..self.index() {
            q = WorldPoint::new(q.y, -q.x);
        }
        q
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "N" | "north" => Ok(Arm::North),
            "E" | "east" => Ok(Arm::East),
            "S" | "south" => Ok(Arm::South),
            "W" | "west" => Ok(Arm::West),
            other => Err(format!("unknown arm `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Movement {
    Left,
    Right,
    Straight,
    UTurn,
}

impl Movement {
    pub const ALL: [Movement; 4] = [Movement::Left, Movement::Right, Movement::Straight, Movement::UTurn];

    pub fn as_str(self) -> &'static str {
        match self {
            Movement::Left => "left",
            Movement::Right => "right",
            Movement::Straight => "straight",
            Movement::UTurn => "u_turn",
        }
    }

    /// Exit arm reached by this movement from `entry`.
    pub fn exit_for(self, entry: Arm) -> Arm {
        let step = match self {
            Movement::UTurn => 0,
            Movement::Left => 1,
            Movement::Straight => 2,
            Movement::Right => 3,
        };
        Arm::from_index(entry.index() + step)
    }
}

impl fmt::Display for Movement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Movement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Movement::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown movement `{s}`"))
    }
}

/// (entry arm, exit arm) lookup. A traveller entering from the north heads
/// south, so leaving east is a left turn.
pub fn movement(entry: Arm, exit: Arm) -> Movement {
    match (exit.index() + 4 - entry.index()) % 4 {
        0 => Movement::UTurn,
        1 => Movement::Left,
        2 => Movement::Straight,
        _ => Movement::Right,
    }
}

/// Simple polygon in world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon(pub Vec<[f64; 2]>);

impl Polygon {
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Polygon(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    /// Even-odd containment; points on the boundary are resolved by the
    /// half-open ray test.
    pub fn contains(&self, p: WorldPoint) -> bool {
        let v = &self.0;
        let mut inside = false;
        let mut j = v.len() - 1;
        for i in 0..v.len() {
            let (xi, yi) = (v[i][0], v[i][1]);
            let (xj, yj) = (v[j][0], v[j][1]);
            if (yi > p.y) != (yj > p.y) && p.x < (xj - xi) * (p.y - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    fn edges(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.0.len();
        (0..n).map(move |i| (self.0[i], self.0[(i + 1) % n]))
    }

    pub fn centroid(&self) -> WorldPoint {
        let n = self.0.len() as f64;
        let (sx, sy) = self.0.iter().fold((0.0, 0.0), |a, p| (a.0 + p[0], a.1 + p[1]));
        WorldPoint::new(sx / n, sy / n)
    }

    /// True when the interiors overlap (touching boundaries do not count).
    pub fn overlaps(&self, other: &Polygon) -> bool {
        fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
            (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        }
        for (a, b) in self.edges() {
            for (c, d) in other.edges() {
                let (d1, d2) = (orient(c, d, a), orient(c, d, b));
                let (d3, d4) = (orient(a, b, c), orient(a, b, d));
                if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
                    return true;
                }
            }
        }
        self.contains(other.centroid()) || other.contains(self.centroid())
    }
}
