use std::io::{BufRead, Write};

use super::GeometryError;
use crate::types::PixelBox;

pub const DEFAULT_KEEP_THRESHOLD: f64 = 0.5;

/// Region-of-interest bitmap. A summed-area table is kept alongside the
/// bits so box coverage queries are O(1).
#[derive(Debug, Clone, PartialEq)]
pub struct SceneMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
    integral: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskDecision {
    Kept,
    Dropped,
}

impl SceneMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, GeometryError> {
        if bits.len() != width * height {
            return Err(GeometryError::InvalidMask(format!(
                "bitmap has {} entries, expected {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        if !bits.iter().any(|&b| b) {
            return Err(GeometryError::InvalidMask("no region of interest".into()));
        }
        let stride = width + 1;
        let mut integral = vec![0u32; stride * (height + 1)];
        for y in 0..height {
            let mut row = 0u32;
            for x in 0..width {
                row += bits[y * width + x] as u32;
                integral[(y + 1) * stride + x + 1] = integral[y * stride + x + 1] + row;
            }
        }
        Ok(Self {
            width,
            height,
            bits,
            integral,
        })
    }

    pub fn all_ones(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![true; width * height]).expect("non-empty mask")
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self, GeometryError> {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::new(width, height, bits)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    fn rect_sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> u32 {
        let s = self.width + 1;
        self.integral[y1 * s + x1] + self.integral[y0 * s + x0]
            - self.integral[y0 * s + x1]
            - self.integral[y1 * s + x0]
    }

    /// Pixel cells touched by `b`, clipped to the frame, as half-open ranges.
    fn cells(&self, b: &PixelBox) -> Option<(usize, usize, usize, usize)> {
        let x0 = b.x_min.max(0.0).floor();
        let y0 = b.y_min.max(0.0).floor();
        let x1 = b.x_max.min(self.width as f64).ceil();
        let y1 = b.y_max.min(self.height as f64).ceil();
        (x0 < x1 && y0 < y1).then_some((x0 as usize, y0 as usize, x1 as usize, y1 as usize))
    }

    /// Fraction of the box's pixel cells that are region of interest.
    pub fn coverage(&self, b: &PixelBox) -> f64 {
        match self.cells(b) {
            Some((x0, y0, x1, y1)) => {
                let total = ((x1 - x0) * (y1 - y0)) as f64;
                self.rect_sum(x0, y0, x1, y1) as f64 / total
            }
            None => 0.0,
        }
    }

    /// Number of region-of-interest pixels.
    pub fn count(&self) -> u32 {
        self.rect_sum(0, 0, self.width, self.height)
    }

    pub fn read_pgm(mut reader: impl BufRead) -> Result<Self, GeometryError> {
        let (width, height, data) = read_pgm_bytes(&mut reader)?;
        Self::new(width, height, data.into_iter().map(|p| p > 127).collect())
    }

    pub fn write_pgm(&self, mut writer: impl Write) -> Result<(), GeometryError> {
        write!(writer, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        writer.write_all(&bytes)?;
        Ok(())
    }
}

pub fn apply_mask(mask: &SceneMask, b: &PixelBox, keep_threshold: f64) -> MaskDecision {
    if mask.cells(b).is_some() && mask.coverage(b) >= keep_threshold {
        MaskDecision::Kept
    } else {
        MaskDecision::Dropped
    }
}

/// Reads a binary PGM (P5, maxval 255). Comments after the magic are skipped.
pub fn read_pgm_bytes(reader: &mut impl BufRead) -> Result<(usize, usize, Vec<u8>), GeometryError> {
    let mut header = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    while tokens.len() < 4 {
        let mut byte = [0u8; 1];
        if reader.read(&mut byte)? == 0 {
            return Err(GeometryError::InvalidMask("truncated PGM header".into()));
        }
        match byte[0] {
            b'#' => {
                let mut skip = Vec::new();
                reader.read_until(b'\n', &mut skip)?;
                if !header.is_empty() {
                    tokens.push(String::from_utf8_lossy(&header).into_owned());
                    header.clear();
                }
            }
            c if c.is_ascii_whitespace() => {
                if !header.is_empty() {
                    tokens.push(String::from_utf8_lossy(&header).into_owned());
                    header.clear();
                }
            }
            c => header.push(c),
        }
    }
    if tokens[0] != "P5" {
        return Err(GeometryError::InvalidMask(format!("unsupported PGM magic {}", tokens[0])));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| GeometryError::InvalidMask(format!("bad PGM header field `{s}`")))
    };
    let (width, height, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
    if maxval != 255 {
        return Err(GeometryError::InvalidMask(format!("unsupported maxval {maxval}")));
    }
    let mut data = vec![0u8; width * height];
    reader
        .read_exact(&mut data)
        .map_err(|_| GeometryError::InvalidMask("truncated PGM raster".into()))?;
    Ok((width, height, data))
}
