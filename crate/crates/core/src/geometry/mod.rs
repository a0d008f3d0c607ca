//! Pixel <-> world mapping, scene masks and detector input shaping.
//!
//! World frame: meters, origin at the intersection center, x east, y north.
//! Pixel frame: x right, y down.

mod crop;
mod homography;
mod mask;

use std::io::BufRead;

pub use crop::{square_crop, CropSpec, CropTransform, DEFAULT_CROP_SIDE};
pub use homography::{calibrate, max_residual, Correspondence, Homography};
pub use mask::{apply_mask, read_pgm_bytes, MaskDecision, SceneMask, DEFAULT_KEEP_THRESHOLD};

use crate::types::{PixelBox, PixelPoint, WorldPoint};

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("point projects to infinity (|w| < 1e-12)")]
    DegenerateProjection,
    #[error("homography is singular")]
    SingularMatrix,
    #[error("correspondences do not determine a unique homography")]
    DegenerateConfiguration,
    #[error("need at least 4 correspondences, got {0}")]
    TooFewCorrespondences(usize),
    #[error("crop rectangle does not fit inside the frame")]
    SpecOutOfBounds,
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PartialEq for GeometryError {
    fn eq(&self, other: &Self) -> bool {
        use GeometryError::*;
        match (self, other) {
            (DegenerateProjection, DegenerateProjection)
            | (SingularMatrix, SingularMatrix)
            | (DegenerateConfiguration, DegenerateConfiguration)
            | (SpecOutOfBounds, SpecOutOfBounds) => true,
            (TooFewCorrespondences(a), TooFewCorrespondences(b)) => a == b,
            (InvalidMask(a), InvalidMask(b)) => a == b,
            (Parse { line: a, message: m }, Parse { line: b, message: n }) => a == b && m == n,
            _ => false,
        }
    }
}

pub fn apply_homography(h: &Homography, p: PixelPoint) -> Result<WorldPoint, GeometryError> {
    h.apply(p.x, p.y).map(|(x, y)| WorldPoint::new(x, y))
}

/// Calibration file: one correspondence per line, `px py wx wy`.
/// Blank lines and `#` comments are ignored.
pub fn read_correspondences(reader: impl BufRead) -> Result<Vec<Correspondence>, GeometryError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let vals: Result<Vec<f64>, _> = body.split_whitespace().map(str::parse::<f64>).collect();
        match vals {
            Ok(v) if v.len() == 4 => out.push(Correspondence::new(v[0], v[1], v[2], v[3])),
            Ok(v) => {
                return Err(GeometryError::Parse {
                    line: i + 1,
                    message: format!("expected 4 values, got {}", v.len()),
                })
            }
            Err(e) => {
                return Err(GeometryError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// The bird's-eye camera: native frame, detector crop and the
/// native-pixel -> world calibration.
#[derive(Debug, Clone)]
pub struct CameraModel {
    pub native_width: u32,
    pub native_height: u32,
    pub crop: CropTransform,
    /// Native pixel -> world.
    pub pixel_to_world: Homography,
    /// Cropped (detector) pixel -> world.
    pub crop_to_world: Homography,
    /// World -> cropped pixel.
    pub world_to_crop: Homography,
}

impl CameraModel {
    pub fn new(
        native_width: u32,
        native_height: u32,
        crop: CropSpec,
        pixel_to_world: Homography,
    ) -> Result<Self, GeometryError> {
        let crop = square_crop(native_width, native_height, crop)?;
        let spec = crop.spec();
        let crop_to_world = pixel_to_world.pre_translate(spec.offset_x as f64, spec.offset_y as f64)?;
        let world_to_crop = crop_to_world.inverse()?;
        Ok(Self {
            native_width,
            native_height,
            crop,
            pixel_to_world,
            crop_to_world,
            world_to_crop,
        })
    }

    /// 1920x1080 camera, 20 px/m, intersection center at the frame center,
    /// default 832 crop (covering roughly 41.6 m x 41.6 m).
    pub fn default_birdseye() -> Self {
        let h = Homography::birdseye(20.0, 960.0, 540.0).expect("invertible");
        Self::new(1920, 1080, CropSpec::default(), h).expect("default crop fits")
    }

    pub fn crop_side(&self) -> f64 {
        self.crop.side()
    }

    pub fn to_world(&self, p: PixelPoint) -> Result<WorldPoint, GeometryError> {
        apply_homography(&self.crop_to_world, p)
    }

    pub fn to_crop_pixel(&self, w: WorldPoint) -> Result<PixelPoint, GeometryError> {
        self.world_to_crop.apply(w.x, w.y).map(|(x, y)| PixelPoint::new(x, y))
    }

    /// World position of a box's center.
    pub fn box_center_world(&self, b: &PixelBox) -> Result<WorldPoint, GeometryError> {
        self.to_world(b.center())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibration_file_parsing() {
        let text = "# px py wx wy\n0 0 0 0\n\n1 0 20 0  # corner\n1 1 20 20\n0 1 0 20\n";
        let c = read_correspondences(text.as_bytes()).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c[1], Correspondence::new(1.0, 0.0, 20.0, 0.0));
        let h = calibrate(&c).unwrap();
        assert!(max_residual(&h, &c).unwrap() < 1e-9);

        let bad = "0 0 0\n";
        assert!(matches!(read_correspondences(bad.as_bytes()), Err(GeometryError::Parse { line: 1, .. })));
    }

    #[test]
    fn default_camera_maps_center_and_scale() {
        let cam = CameraModel::default_birdseye();
        let c = cam.to_crop_pixel(WorldPoint::new(0.0, 0.0)).unwrap();
        assert!((c.x - 416.0).abs() < 1e-9 && (c.y - 416.0).abs() < 1e-9);
        let n = cam.to_crop_pixel(WorldPoint::new(0.0, 10.0)).unwrap();
        assert!((n.y - 216.0).abs() < 1e-9, "north is up in the image");
        let w = cam.to_world(PixelPoint::new(436.0, 416.0)).unwrap();
        assert!((w.x - 1.0).abs() < 1e-12 && w.y.abs() < 1e-12);
    }
}
