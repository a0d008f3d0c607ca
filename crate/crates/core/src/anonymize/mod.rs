//! Region blurring on grayscale frames and the face/plate recall audit.

mod recall;
mod regions;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::geometry::read_pgm_bytes;
use crate::types::PixelBox;

pub use recall::{brute_force_coverage, covered_pixels, evaluate_recall, write_audit_csv, KindRecall, RecallParams, RecallReport};
pub use regions::{blur_boxes, region_for, render_frame, sensitive_regions, RegionSpec, SensitiveKind, SensitiveRegion};

pub const DEFAULT_KERNEL: usize = 15;

#[derive(Debug, thiserror::Error)]
pub enum AnonymizeError {
    #[error("kernel must be odd and at least 3, got {0}")]
    InvalidKernel(usize),
    #[error("buffer length {len} does not match {width}x{height}")]
    BadDimensions { width: usize, height: usize, len: usize },
    #[error("invalid PGM: {0}")]
    Pgm(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major 8-bit grayscale frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameBuffer {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl FrameBuffer {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, AnonymizeError> {
        if pixels.len() != width * height {
            return Err(AnonymizeError::BadDimensions {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn read_pgm(mut reader: impl BufRead) -> Result<Self, AnonymizeError> {
        let (w, h, data) = read_pgm_bytes(&mut reader).map_err(|e| AnonymizeError::Pgm(e.to_string()))?;
        Self::new(w, h, data)
    }

    pub fn write_pgm(&self, mut w: impl Write) -> Result<(), AnonymizeError> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.pixels)?;
        Ok(())
    }
}

/// Half-open integer pixel rectangle `[x0, x1) x [y0, y1)`. May extend
/// past the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegionBox {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl RegionBox {
    pub const fn new(x0: i64, y0: i64, x1: i64, y1: i64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    /// Pixels whose centers lie in `[x_min, x_max) x [y_min, y_max)`.
    pub fn rasterize(b: &PixelBox) -> Self {
        let edge = |v: f64| (v - 0.5).ceil() as i64;
        Self::new(edge(b.x_min), edge(b.y_min), edge(b.x_max), edge(b.y_max))
    }

    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    pub fn area(&self) -> u64 {
        if self.is_empty() {
            0
        } else {
            (self.x1 - self.x0) as u64 * (self.y1 - self.y0) as u64
        }
    }

    pub fn intersect(&self, o: &RegionBox) -> RegionBox {
        RegionBox::new(self.x0.max(o.x0), self.y0.max(o.y0), self.x1.min(o.x1), self.y1.min(o.y1))
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }
}

/// A blur region that had to be clipped to the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionOutOfBounds {
    pub index: usize,
    pub requested: RegionBox,
    pub clipped: RegionBox,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blurred {
    pub frame: FrameBuffer,
    pub warnings: Vec<RegionOutOfBounds>,
}

/// Box blur inside each region. Each output pixel is the rounded mean of
/// the input over the `kernel x kernel` neighborhood intersected with its
/// region. Regions read the unblurred input; where regions overlap the
/// later one wins. Pixels outside every region are copied unchanged.
pub fn blur_regions(frame: &FrameBuffer, regions: &[RegionBox], kernel: usize) -> Result<Blurred, AnonymizeError> {
    if kernel < 3 || kernel.is_multiple_of(2) {
        return Err(AnonymizeError::InvalidKernel(kernel));
    }
    let bounds = RegionBox::new(0, 0, frame.width as i64, frame.height as i64);
    let mut out = frame.clone();
    let mut warnings = Vec::new();
    let half = (kernel / 2) as i64;
    for (index, r) in regions.iter().enumerate() {
        let c = r.intersect(&bounds);
        if c != *r {
            warnings.push(RegionOutOfBounds {
                index,
                requested: *r,
                clipped: c,
            });
        }
        if c.is_empty() {
            continue;
        }
        let (rw, rh) = ((c.x1 - c.x0) as usize, (c.y1 - c.y0) as usize);
        // integral image over the region
        let mut sat = vec![0u64; (rw + 1) * (rh + 1)];
        for y in 0..rh {
            let mut row = 0u64;
            for x in 0..rw {
                row += frame.get(c.x0 as usize + x, c.y0 as usize + y) as u64;
                sat[(y + 1) * (rw + 1) + x + 1] = sat[y * (rw + 1) + x + 1] + row;
            }
        }
        for y in 0..rh as i64 {
            let (ya, yb) = ((y - half).max(0) as usize, (y + half + 1).min(rh as i64) as usize);
            for x in 0..rw as i64 {
                let (xa, xb) = ((x - half).max(0) as usize, (x + half + 1).min(rw as i64) as usize);
                let sum = sat[yb * (rw + 1) + xb] + sat[ya * (rw + 1) + xa] - sat[ya * (rw + 1) + xb] - sat[yb * (rw + 1) + xa];
                let n = ((xb - xa) * (yb - ya)) as u64;
                out.set((c.x0 + x) as usize, (c.y0 + y) as usize, ((sum + n / 2) / n) as u8);
            }
        }
    }
    Ok(Blurred { frame: out, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(frame: &FrameBuffer, r: RegionBox, kernel: usize, x: i64, y: i64) -> u8 {
        let h = (kernel / 2) as i64;
        let (mut sum, mut n) = (0u64, 0u64);
        for yy in y - h..=y + h {
            for xx in x - h..=x + h {
                if r.contains(xx, yy) {
                    sum += frame.get(xx as usize, yy as usize) as u64;
                    n += 1;
                }
            }
        }
        ((sum + n / 2) / n) as u8
    }

    fn noise_frame(w: usize, h: usize) -> FrameBuffer {
        let px = (0..w * h).map(|i| ((i * 7919 + i / 13 * 31) % 256) as u8).collect();
        FrameBuffer::new(w, h, px).unwrap()
    }

    #[test]
    fn uniform_frame_unchanged() {
        let f = FrameBuffer::filled(40, 30, 128);
        let b = blur_regions(&f, &[RegionBox::new(5, 5, 25, 20)], 15).unwrap();
        assert_eq!(b.frame, f);
    }

    #[test]
    fn empty_region_list_is_identity() {
        let f = noise_frame(32, 32);
        assert_eq!(blur_regions(&f, &[], 5).unwrap().frame, f);
    }

    #[test]
    fn single_white_pixel() {
        let mut f = FrameBuffer::filled(30, 30, 0);
        f.set(12, 12, 255);
        let b = blur_regions(&f, &[RegionBox::new(5, 5, 20, 20)], 15).unwrap();
        // 255 / 225 = 1.13
        assert_eq!(b.frame.get(12, 12), 1);
    }

    #[test]
    fn matches_naive_box_filter() {
        let f = noise_frame(50, 40);
        let r = RegionBox::new(3, 4, 31, 22);
        let b = blur_regions(&f, &[r], 7).unwrap().frame;
        for y in 0..40 {
            for x in 0..50 {
                let want = if r.contains(x, y) { naive(&f, r, 7, x, y) } else { f.get(x as usize, y as usize) };
                assert_eq!(b.get(x as usize, y as usize), want, "({x}, {y})");
            }
        }
    }

    #[test]
    fn out_of_bounds_clipped_with_warning() {
        let f = noise_frame(20, 20);
        let b = blur_regions(&f, &[RegionBox::new(-5, 10, 8, 30)], 3).unwrap();
        assert_eq!(b.warnings.len(), 1);
        assert_eq!(b.warnings[0].clipped, RegionBox::new(0, 10, 8, 20));
    }

    #[test]
    fn kernel_validation() {
        let f = FrameBuffer::filled(4, 4, 0);
        assert!(blur_regions(&f, &[], 4).is_err());
        assert!(blur_regions(&f, &[], 1).is_err());
        assert!(FrameBuffer::new(4, 4, vec![0; 15]).is_err());
    }

    #[test]
    fn rasterize_uses_pixel_centers() {
        assert_eq!(RegionBox::rasterize(&PixelBox::new(0.4, 0.6, 3.5, 2.5)), RegionBox::new(0, 1, 3, 2));
        assert_eq!(RegionBox::rasterize(&PixelBox::new(0.0, 0.0, 10.0, 10.0)).area(), 100);
    }

    #[test]
    fn pgm_round_trip() {
        let f = noise_frame(9, 7);
        let mut buf = Vec::new();
        f.write_pgm(&mut buf).unwrap();
        assert_eq!(FrameBuffer::read_pgm(&buf[..]).unwrap(), f);
    }
}
