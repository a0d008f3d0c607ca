use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::noise::NoiseProfile;
use crate::geometry::SceneMask;
use crate::scenesim::ProjectedBox;
use crate::types::{ObjectClass, PixelBox};

/// One detector output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame_index: u64,
    pub bbox: PixelBox,
    pub class: ObjectClass,
    pub confidence: f64,
    /// Simulator-side provenance. Never consulted by the tracker.
    pub truth_id: Option<u64>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(parts: &[u64]) -> u64 {
    parts.iter().fold(0x243F_6A88_85A3_08D3, |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// Uniform in [0, 1) from a hash of `parts`.
pub(crate) fn unit_hash(parts: &[u64]) -> f64 {
    (mix(parts) >> 11) as f64 / (1u64 << 53) as f64
}

const TAG_PHASE: u64 = 1;
const TAG_DROPOUT: u64 = 2;
const TAG_DUPLICATE: u64 = 3;
const TAG_DUP_SIDE: u64 = 4;
const TAG_FRAME: u64 = 5;

/// Detector emulator bound to a frame geometry. Stateless: the output for a
/// frame depends only on (profile, seed, frame index, input boxes), so
/// frames can be emulated in any order or concurrently.
#[derive(Debug, Clone)]
pub struct Emulator {
    profile: NoiseProfile,
    seed: u64,
    frame_dims: (f64, f64),
    mask: Option<Arc<SceneMask>>,
}

impl Emulator {
    pub fn new(profile: NoiseProfile, seed: u64, frame_dims: (f64, f64), mask: Option<Arc<SceneMask>>) -> Self {
        Self {
            profile,
            seed,
            frame_dims,
            mask,
        }
    }

    pub fn profile(&self) -> &NoiseProfile {
        &self.profile
    }

    /// Episode index of object `id` at `frame`; episodes are staggered per
    /// object so they do not all flip on the same frame.
    fn episode(&self, id: u64, frame: u64) -> u64 {
        let len = self.profile.episode_frames as u64;
        let phase = mix(&[self.seed, TAG_PHASE, id]) % len;
        (frame + phase) / len
    }

    fn jitter(&self, rng: &mut ChaCha8Rng, b: &PixelBox) -> PixelBox {
        let sigma = self.profile.jitter_sigma;
        if sigma == 0.0 {
            return *b;
        }
        let n = Normal::new(0.0, sigma).expect("finite sigma");
        let (w, h) = (b.width(), b.height());
        let c = b.center();
        let cx = c.x + n.sample(rng) * w;
        let cy = c.y + n.sample(rng) * h;
        let nw = (w * (1.0 + n.sample(rng))).max(1.0);
        let nh = (h * (1.0 + n.sample(rng))).max(1.0);
        PixelBox::from_center(cx, cy, nw, nh)
    }

    fn clip(&self, b: PixelBox) -> Option<PixelBox> {
        b.clip(self.frame_dims.0, self.frame_dims.1)
            .filter(|c| c.width() >= 0.5 && c.height() >= 0.5)
    }

    pub fn emulate(&self, frame_index: u64, boxes: &[ProjectedBox]) -> Vec<Detection> {
        let p = &self.profile;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[self.seed, TAG_FRAME, frame_index]));
        let mut out = Vec::with_capacity(boxes.len() + 2);
        let mut spurious = Vec::new();
        for t in boxes {
            let noise = p.class(t.class);
            let area = t.bbox.area();
            let miss_p = noise.miss.probability(area);
            // draw every variate unconditionally so one object's outcome does
            // not shift the random stream of the next
            let u_miss: f64 = rng.random();
            let u_conf = rng.random::<f64>();
            let u_confuse: f64 = rng.random();
            let jittered = self.jitter(&mut rng, &t.bbox);

            let episode = self.episode(t.id, frame_index);
            let dropped = noise.dropout_rate > 0.0
                && unit_hash(&[self.seed, TAG_DROPOUT, t.id, episode]) < noise.dropout_rate;

            if !dropped && u_miss >= miss_p {
                let class = match t.class {
                    ObjectClass::Pedestrian if u_confuse < p.confusion_rate => ObjectClass::Bicycle,
                    ObjectClass::Bicycle if u_confuse < p.confusion_rate => ObjectClass::Pedestrian,
                    c => c,
                };
                let confidence = if p.confidence_sigma == 0.0 && p.confidence_coupling == 0.0 {
                    1.0
                } else {
                    let z = normal_from_unit(u_conf);
                    (1.0 - p.confidence_coupling * miss_p - 0.05 + p.confidence_sigma * z).clamp(0.05, 1.0)
                };
                if let Some(bbox) = self.clip(jittered) {
                    out.push(Detection {
                        frame_index,
                        bbox,
                        class,
                        confidence,
                        truth_id: Some(t.id),
                    });
                }
            }

            if noise.duplicate_rate > 0.0
                && unit_hash(&[self.seed, TAG_DUPLICATE, t.id, episode]) < noise.duplicate_rate
            {
                let side = if unit_hash(&[self.seed, TAG_DUP_SIDE, t.id, episode]) < 0.5 { -1.0 } else { 1.0 };
                let b = &t.bbox;
                let shifted = if b.width() >= b.height() {
                    b.translate(side * p.duplicate_shift * b.width(), 0.0)
                } else {
                    b.translate(0.0, side * p.duplicate_shift * b.height())
                };
                let dup = self.jitter(&mut rng, &shifted);
                let confidence = rng.random_range(p.spurious_confidence.0..=p.spurious_confidence.1);
                if let Some(bbox) = self.clip(dup) {
                    spurious.push(Detection {
                        frame_index,
                        bbox,
                        class: t.class,
                        confidence,
                        truth_id: None,
                    });
                }
            }
        }

        if p.false_positives_per_frame > 0.0 {
            let count = Poisson::new(p.false_positives_per_frame)
                .expect("positive mean")
                .sample(&mut rng) as usize;
            for _ in 0..count {
                if let Some(d) = self.clutter(&mut rng, frame_index) {
                    spurious.push(d);
                }
            }
        }
        out.extend(spurious);
        out
    }

    /// A pedestrian-scale box at a uniformly drawn region-of-interest location.
    fn clutter(&self, rng: &mut ChaCha8Rng, frame_index: u64) -> Option<Detection> {
        let (fw, fh) = self.frame_dims;
        let p = &self.profile;
        let confidence = rng.random_range(p.spurious_confidence.0..=p.spurious_confidence.1);
        let class = if rng.random_bool(0.85) {
            ObjectClass::Pedestrian
        } else {
            ObjectClass::Bicycle
        };
        for _ in 0..32 {
            let w = rng.random_range(8.0..14.0);
            let h = rng.random_range(8.0..14.0);
            let cx = rng.random_range(w / 2.0..fw - w / 2.0);
            let cy = rng.random_range(h / 2.0..fh - h / 2.0);
            let bbox = PixelBox::from_center(cx, cy, w, h);
            let ok = self.mask.as_ref().is_none_or(|m| {
                let c = bbox.center();
                m.get(c.x as usize, c.y as usize)
            });
            if ok {
                return Some(Detection {
                    frame_index,
                    bbox,
                    class,
                    confidence,
                    truth_id: None,
                });
            }
        }
        None
    }
}

/// Inverse-CDF-free standard normal from one uniform (Box-Muller with a
/// derived second uniform), so the confidence draw costs a single variate.
fn normal_from_unit(u: f64) -> f64 {
    let u1 = u.clamp(1e-12, 1.0 - 1e-12);
    let u2 = unit_hash(&[u.to_bits()]);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Free-function form of [`Emulator::emulate`] without a mask.
pub fn emulate(
    frame_index: u64,
    boxes: &[ProjectedBox],
    profile: &NoiseProfile,
    seed: u64,
    frame_dims: (f64, f64),
) -> Vec<Detection> {
    Emulator::new(profile.clone(), seed, frame_dims, None).emulate(frame_index, boxes)
}

pub const DETECTION_LOG_HEADER: &str = "# frame_index,x_min,y_min,x_max,y_max,class,confidence";

pub fn format_detection(d: &Detection) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        d.frame_index, d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max, d.class, d.confidence
    )
}

pub fn parse_detection(line: &str) -> Result<Detection, String> {
    let f: Vec<&str> = line.trim().split(',').collect();
    if f.len() != 7 {
        return Err(format!("expected 7 fields, got {}", f.len()));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("{s}: {e}"));
    let bbox = PixelBox::new(num(f[1])?, num(f[2])?, num(f[3])?, num(f[4])?);
    if !bbox.is_valid() {
        return Err("degenerate box".into());
    }
    Ok(Detection {
        frame_index: f[0].parse().map_err(|e| format!("{}: {e}", f[0]))?,
        bbox,
        class: f[5].parse().map_err(|e: crate::types::UnknownClass| e.to_string())?,
        confidence: num(f[6])?,
        truth_id: None,
    })
}
