use std::fmt;

use serde::{Deserialize, Serialize};

use super::{FrameBuffer, RegionBox};
use crate::detemu::{unit_hash, Detection};
use crate::scenesim::ProjectedBox;
use crate::types::{ObjectClass, PixelBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitiveKind {
    Face,
    LicensePlate,
}

impl SensitiveKind {
    pub const ALL: [SensitiveKind; 2] = [SensitiveKind::Face, SensitiveKind::LicensePlate];
}

impl fmt::Display for SensitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SensitiveKind::Face => "face",
            SensitiveKind::LicensePlate => "license_plate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitiveRegion {
    pub region: RegionBox,
    pub kind: SensitiveKind,
    /// Simulator stand-in for "a person could identify this".
    pub identifiable: bool,
}

impl SensitiveRegion {
    pub fn new(region: RegionBox, kind: SensitiveKind, identifiable: bool) -> Self {
        Self {
            region,
            kind,
            identifiable,
        }
    }

    pub fn area_px(&self) -> u64 {
        self.region.area()
    }
}

/// Placement of synthetic faces and plates relative to object boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegionSpec {
    /// Face height as a fraction of the pedestrian (or rider) box height.
    pub face_height_frac: f64,
    pub face_width_frac: f64,
    /// Plate extent across the vehicle, as a fraction of the short side.
    pub plate_width_frac: f64,
    /// Plate extent along the vehicle, as a fraction of the long side.
    pub plate_depth_frac: f64,
    /// Regions below this area are never identifiable.
    pub identifiable_px: u64,
    /// Share of faces turned toward the camera.
    pub facing_fraction: f64,
    /// Blur boxes grow by this fraction of the region size on every side.
    pub blur_pad_frac: f64,
    pub seed: u64,
}

impl Default for RegionSpec {
    fn default() -> Self {
        Self {
            face_height_frac: 1.0 / 7.0,
            face_width_frac: 0.6,
            plate_width_frac: 0.5,
            plate_depth_frac: 0.12,
            identifiable_px: 100,
            facing_fraction: 0.5,
            blur_pad_frac: 0.2,
            seed: 0,
        }
    }
}

/// The face (top of a pedestrian or bicycle box) or plate (rear end of a
/// vehicle box, taken as the bottom or right end of the long side).
pub fn region_for(class: ObjectClass, b: &PixelBox, spec: &RegionSpec) -> (SensitiveKind, PixelBox) {
    let (w, h) = (b.width(), b.height());
    let c = b.center();
    match class {
        ObjectClass::Pedestrian | ObjectClass::Bicycle => {
            let fw = w * spec.face_width_frac;
            let fh = h * spec.face_height_frac;
            (SensitiveKind::Face, PixelBox::new(c.x - fw / 2.0, b.y_min, c.x + fw / 2.0, b.y_min + fh))
        }
        ObjectClass::Vehicle => {
            let plate = if h >= w {
                let pw = w * spec.plate_width_frac;
                PixelBox::new(c.x - pw / 2.0, b.y_max - h * spec.plate_depth_frac, c.x + pw / 2.0, b.y_max)
            } else {
                let ph = h * spec.plate_width_frac;
                PixelBox::new(b.x_max - w * spec.plate_depth_frac, c.y - ph / 2.0, b.x_max, c.y + ph / 2.0)
            };
            (SensitiveKind::LicensePlate, plate)
        }
    }
}

const TAG_FACING: u64 = 0x4641_4345;

/// Ground-truth sensitive regions for one frame of projected objects.
pub fn sensitive_regions(objects: &[ProjectedBox], spec: &RegionSpec) -> Vec<SensitiveRegion> {
    objects
        .iter()
        .filter_map(|o| {
            let (kind, b) = region_for(o.class, &o.bbox, spec);
            let region = RegionBox::rasterize(&b);
            if region.is_empty() {
                return None;
            }
            let facing = match kind {
                SensitiveKind::Face => unit_hash(&[spec.seed, TAG_FACING, o.id]) < spec.facing_fraction,
                SensitiveKind::LicensePlate => true,
            };
            Some(SensitiveRegion::new(region, kind, facing && region.area() >= spec.identifiable_px))
        })
        .collect()
}

/// Blur boxes the pipeline derives from detections.
pub fn blur_boxes(detections: &[Detection], spec: &RegionSpec) -> Vec<RegionBox> {
    detections
        .iter()
        .map(|d| {
            let (_, b) = region_for(d.class, &d.bbox, spec);
            let (px, py) = (b.width() * spec.blur_pad_frac, b.height() * spec.blur_pad_frac);
            RegionBox::rasterize(&PixelBox::new(b.x_min - px, b.y_min - py, b.x_max + px, b.y_max + py))
        })
        .filter(|r| !r.is_empty())
        .collect()
}

fn fill(frame: &mut FrameBuffer, r: &RegionBox, value: impl Fn(i64, i64) -> u8) {
    let c = r.intersect(&RegionBox::new(0, 0, frame.width() as i64, frame.height() as i64));
    for y in c.y0..c.y1 {
        for x in c.x0..c.x1 {
            frame.set(x as usize, y as usize, value(x, y));
        }
    }
}

/// Flat-shaded stand-in frame: objects as filled boxes, sensitive regions
/// as a fine checkerboard so blurring is visible.
pub fn render_frame(width: usize, height: usize, objects: &[ProjectedBox], regions: &[SensitiveRegion]) -> FrameBuffer {
    let mut f = FrameBuffer::filled(width, height, 96);
    for o in objects {
        let shade = match o.class {
            ObjectClass::Pedestrian => 200,
            ObjectClass::Vehicle => 50,
            ObjectClass::Bicycle => 150,
        };
        fill(&mut f, &RegionBox::rasterize(&o.bbox), |_, _| shade);
    }
    for r in regions {
        fill(&mut f, &r.region, |x, y| if (x + y) % 2 == 0 { 255 } else { 0 });
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn face_sits_on_top() {
        let (k, b) = region_for(ObjectClass::Pedestrian, &PixelBox::new(10.0, 20.0, 20.0, 90.0), &RegionSpec::default());
        assert_eq!(k, SensitiveKind::Face);
        assert_eq!(b.y_min, 20.0);
        assert!((b.height() - 10.0).abs() < 1e-12);
        assert!((b.width() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn plate_at_long_end() {
        let spec = RegionSpec::default();
        let (_, tall) = region_for(ObjectClass::Vehicle, &PixelBox::new(0.0, 0.0, 36.0, 90.0), &spec);
        assert_eq!(tall.y_max, 90.0);
        let (_, wide) = region_for(ObjectClass::Vehicle, &PixelBox::new(0.0, 0.0, 90.0, 36.0), &spec);
        assert_eq!(wide.x_max, 90.0);
        assert!((wide.height() - 18.0).abs() < 1e-12);
    }

    #[test]
    fn identifiable_needs_area() {
        let objs = [
            ProjectedBox {
                id: 1,
                class: ObjectClass::Vehicle,
                bbox: PixelBox::new(0.0, 0.0, 36.0, 90.0),
            },
            ProjectedBox {
                id: 2,
                class: ObjectClass::Vehicle,
                bbox: PixelBox::new(100.0, 100.0, 110.0, 120.0),
            },
        ];
        let r = sensitive_regions(&objs, &RegionSpec::default());
        assert_eq!(r.len(), 2);
        assert!(r[0].identifiable && r[0].area_px() >= 100);
        assert!(!r[1].identifiable);
    }

    #[test]
    fn render_marks_regions() {
        let objs = [ProjectedBox {
            id: 1,
            class: ObjectClass::Vehicle,
            bbox: PixelBox::new(2.0, 2.0, 38.0, 92.0),
        }];
        let regions = sensitive_regions(&objs, &RegionSpec::default());
        let f = render_frame(64, 100, &objs, &regions);
        assert_eq!(f.get(0, 0), 96);
        assert_eq!(f.get(20, 20), 50);
        let r = regions[0].region;
        let (x, y) = (r.x0 as usize, r.y0 as usize);
        assert_ne!(f.get(x, y), f.get(x + 1, y));
    }
}
