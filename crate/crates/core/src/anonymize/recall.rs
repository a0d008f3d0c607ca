use std::collections::BTreeMap;
use std::io::Write;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use super::{RegionBox, SensitiveKind, SensitiveRegion};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecallParams {
    /// Regions smaller than this are left out of total recall.
    pub area_floor_px: u64,
    /// Fraction of a region's pixels that must be blurred.
    pub coverage_min: f64,
}

impl Default for RecallParams {
    fn default() -> Self {
        Self {
            area_floor_px: 100,
            coverage_min: 0.75,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindRecall {
    pub total: u64,
    /// Regions at or above the area floor.
    pub eligible: u64,
    /// Eligible regions that are anonymized.
    pub anonymized: u64,
    pub visible: u64,
    pub visible_anonymized: u64,
}

impl KindRecall {
    pub fn total_recall(&self) -> Option<f64> {
        (self.eligible > 0).then(|| self.anonymized as f64 / self.eligible as f64)
    }

    pub fn visible_recall(&self) -> Option<f64> {
        (self.visible > 0).then(|| self.visible_anonymized as f64 / self.visible as f64)
    }
}

impl AddAssign for KindRecall {
    fn add_assign(&mut self, o: Self) {
        self.total += o.total;
        self.eligible += o.eligible;
        self.anonymized += o.anonymized;
        self.visible += o.visible;
        self.visible_anonymized += o.visible_anonymized;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecallReport {
    pub per_kind: BTreeMap<SensitiveKind, KindRecall>,
}

impl RecallReport {
    pub fn get(&self, kind: SensitiveKind) -> KindRecall {
        self.per_kind.get(&kind).copied().unwrap_or_default()
    }

    pub fn merge(&mut self, other: &RecallReport) {
        for (k, v) in &other.per_kind {
            *self.per_kind.entry(*k).or_default() += *v;
        }
    }
}

/// Pixels of `target` inside the union of `boxes`, by coordinate
/// compression over the box edges.
pub fn covered_pixels(target: &RegionBox, boxes: &[RegionBox]) -> u64 {
    let clipped: Vec<RegionBox> = boxes
        .iter()
        .map(|b| b.intersect(target))
        .filter(|b| !b.is_empty())
        .collect();
    if clipped.is_empty() {
        return 0;
    }
    let mut xs: Vec<i64> = clipped.iter().flat_map(|b| [b.x0, b.x1]).collect();
    let mut ys: Vec<i64> = clipped.iter().flat_map(|b| [b.y0, b.y1]).collect();
    xs.sort_unstable();
    xs.dedup();
    ys.sort_unstable();
    ys.dedup();
    let (nx, ny) = (xs.len(), ys.len());
    let idx = |v: &[i64], k: i64| v.binary_search(&k).expect("edge listed");
    // 2-D difference array over compressed cells
    let mut diff = vec![0i32; (nx + 1) * (ny + 1)];
    for b in &clipped {
        let (xa, xb, ya, yb) = (idx(&xs, b.x0), idx(&xs, b.x1), idx(&ys, b.y0), idx(&ys, b.y1));
        diff[ya * (nx + 1) + xa] += 1;
        diff[ya * (nx + 1) + xb] -= 1;
        diff[yb * (nx + 1) + xa] -= 1;
        diff[yb * (nx + 1) + xb] += 1;
    }
    for j in 0..=ny {
        for i in 1..=nx {
            diff[j * (nx + 1) + i] += diff[j * (nx + 1) + i - 1];
        }
    }
    for j in 1..=ny {
        for i in 0..=nx {
            diff[j * (nx + 1) + i] += diff[(j - 1) * (nx + 1) + i];
        }
    }
    let mut total = 0u64;
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            if diff[j * (nx + 1) + i] > 0 {
                total += (xs[i + 1] - xs[i]) as u64 * (ys[j + 1] - ys[j]) as u64;
            }
        }
    }
    total
}

/// Per-pixel reference for [`covered_pixels`].
pub fn brute_force_coverage(target: &RegionBox, boxes: &[RegionBox]) -> u64 {
    let mut n = 0;
    for y in target.y0..target.y1 {
        for x in target.x0..target.x1 {
            if boxes.iter().any(|b| b.contains(x, y)) {
                n += 1;
            }
        }
    }
    n
}

fn anonymized(covered: u64, area: u64, coverage_min: f64) -> bool {
    covered as f64 >= coverage_min * area as f64
}

/// A truth region is anonymized when the blurred boxes cover at least
/// `coverage_min` of its pixels.
pub fn evaluate_recall(blurred: &[RegionBox], truth: &[SensitiveRegion], params: &RecallParams) -> RecallReport {
    let mut report = RecallReport::default();
    for t in truth {
        let area = t.area_px();
        if area == 0 {
            continue;
        }
        let ok = anonymized(covered_pixels(&t.region, blurred), area, params.coverage_min);
        let e = report.per_kind.entry(t.kind).or_default();
        e.total += 1;
        if area >= params.area_floor_px {
            e.eligible += 1;
            e.anonymized += ok as u64;
        }
        if t.identifiable {
            e.visible += 1;
            e.visible_anonymized += ok as u64;
        }
    }
    report
}

pub fn write_audit_csv(mut w: impl Write, report: &RecallReport) -> std::io::Result<()> {
    writeln!(w, "kind,total,eligible,anonymized,visible_recall,total_recall")?;
    let fmt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
    for kind in SensitiveKind::ALL {
        let k = report.get(kind);
        writeln!(
            w,
            "{kind},{},{},{},{},{}",
            k.total,
            k.eligible,
            k.anonymized,
            fmt(k.visible_recall()),
            fmt(k.total_recall())
        )?;
    }
    Ok(())
}
