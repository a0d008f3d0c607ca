use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::types::{PixelBox, PixelPoint};

pub const DEFAULT_CROP_SIDE: u32 = 832;

/// Square crop of the native camera frame fed to the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropSpec {
    pub offset_x: u32,
    pub offset_y: u32,
    pub side: u32,
}

impl Default for CropSpec {
    /// Centered 832 crop of a 1920x1080 frame.
    fn default() -> Self {
        Self {
            offset_x: 544,
            offset_y: 124,
            side: DEFAULT_CROP_SIDE,
        }
    }
}

/// Source-frame <-> cropped-frame mapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropTransform {
    spec: CropSpec,
}

pub fn square_crop(frame_width: u32, frame_height: u32, spec: CropSpec) -> Result<CropTransform, GeometryError> {
    let fits = |off: u32, dim: u32| off.checked_add(spec.side).is_some_and(|end| end <= dim);
    if spec.side == 0 || !fits(spec.offset_x, frame_width) || !fits(spec.offset_y, frame_height) {
        return Err(GeometryError::SpecOutOfBounds);
    }
    Ok(CropTransform { spec })
}

impl CropTransform {
    pub fn spec(&self) -> CropSpec {
        self.spec
    }

    pub fn side(&self) -> f64 {
        self.spec.side as f64
    }

    /// `None` when the source point falls outside the crop.
    pub fn to_crop(&self, p: PixelPoint) -> Option<PixelPoint> {
        let x = p.x - self.spec.offset_x as f64;
        let y = p.y - self.spec.offset_y as f64;
        let side = self.side();
        ((0.0..side).contains(&x) && (0.0..side).contains(&y)).then_some(PixelPoint::new(x, y))
    }

    pub fn to_source(&self, p: PixelPoint) -> PixelPoint {
        PixelPoint::new(p.x + self.spec.offset_x as f64, p.y + self.spec.offset_y as f64)
    }

    /// Translate a source-frame box into the crop and clip it to the crop edges.
    pub fn crop_box(&self, b: &PixelBox) -> Option<PixelBox> {
        b.translate(-(self.spec.offset_x as f64), -(self.spec.offset_y as f64))
            .clip(self.side(), self.side())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corner_and_boundary_examples() {
        let t = square_crop(1920, 1080, CropSpec::default()).unwrap();
        assert_eq!(t.to_crop(PixelPoint::new(544.0, 124.0)), Some(PixelPoint::new(0.0, 0.0)));
        assert_eq!(t.to_crop(PixelPoint::new(543.0, 124.0)), None);
        assert_eq!(t.to_crop(PixelPoint::new(1375.0, 955.0)), Some(PixelPoint::new(831.0, 831.0)));
        assert_eq!(t.to_crop(PixelPoint::new(1376.0, 955.0)), None);
    }

    #[test]
    fn out_of_bounds_spec() {
        let spec = CropSpec {
            offset_x: 1200,
            offset_y: 0,
            side: 832,
        };
        assert_eq!(square_crop(1920, 1080, spec), Err(GeometryError::SpecOutOfBounds));
        let zero = CropSpec {
            side: 0,
            ..CropSpec::default()
        };
        assert_eq!(square_crop(1920, 1080, zero), Err(GeometryError::SpecOutOfBounds));
    }
}
