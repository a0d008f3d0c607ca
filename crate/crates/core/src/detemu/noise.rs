use serde::{Deserialize, Serialize};

use crate::types::ObjectClass;

/// False for NaN.
fn non_negative(v: f64) -> bool {
    v >= 0.0
}

/// Logistic miss probability in box pixel area:
/// `floor + (1 - floor) / (1 + exp(slope * (area - midpoint)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissCurve {
    pub floor: f64,
    pub midpoint_px2: f64,
    pub slope: f64,
}

impl MissCurve {
    pub const NEVER: MissCurve = MissCurve {
        floor: 0.0,
        midpoint_px2: 0.0,
        slope: f64::INFINITY,
    };

    pub fn probability(&self, area: f64) -> f64 {
        let x = self.slope * (area - self.midpoint_px2);
        let tail = if x.is_nan() {
            0.0
        } else {
            1.0 / (1.0 + x.exp())
        };
        (self.floor + (1.0 - self.floor) * tail).clamp(0.0, 1.0)
    }
}

/// Per-class detector behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassNoise {
    pub miss: MissCurve,
    /// Probability that the object is lost for a whole episode.
    #[serde(default)]
    pub dropout_rate: f64,
    /// Probability that the object carries a second, offset box for a whole
    /// episode (an unsuppressed overlapping proposal).
    #[serde(default)]
    pub duplicate_rate: f64,
}

impl ClassNoise {
    pub const CLEAN: ClassNoise = ClassNoise {
        miss: MissCurve::NEVER,
        dropout_rate: 0.0,
        duplicate_rate: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub pedestrian: ClassNoise,
    pub vehicle: ClassNoise,
    pub bicycle: ClassNoise,
    /// Poisson mean of clutter detections per frame.
    pub false_positives_per_frame: f64,
    /// Box jitter, Gaussian sigma as a fraction of the box side.
    pub jitter_sigma: f64,
    /// Probability of swapping pedestrian <-> bicycle labels.
    pub confusion_rate: f64,
    /// Length of the blocks over which dropouts and duplicates persist.
    pub episode_frames: u32,
    /// How strongly true-positive confidence tracks detection difficulty.
    pub confidence_coupling: f64,
    /// Gaussian sigma of true-positive confidence.
    pub confidence_sigma: f64,
    /// Confidence range of clutter and duplicate boxes.
    pub spurious_confidence: (f64, f64),
    /// Offset of duplicate boxes along the long side, as a fraction of it.
    pub duplicate_shift: f64,
}

impl NoiseProfile {
    /// Perfect detector: every visible box, unchanged, confidence 1.
    pub fn clean() -> Self {
        Self {
            pedestrian: ClassNoise::CLEAN,
            vehicle: ClassNoise::CLEAN,
            bicycle: ClassNoise::CLEAN,
            false_positives_per_frame: 0.0,
            jitter_sigma: 0.0,
            confusion_rate: 0.0,
            episode_frames: 30,
            confidence_coupling: 0.0,
            confidence_sigma: 0.0,
            spurious_confidence: (0.05, 0.5),
            duplicate_shift: 0.35,
        }
    }

    pub fn class(&self, c: ObjectClass) -> &ClassNoise {
        match c {
            ObjectClass::Pedestrian => &self.pedestrian,
            ObjectClass::Vehicle => &self.vehicle,
            ObjectClass::Bicycle => &self.bicycle,
        }
    }

    pub fn class_mut(&mut self, c: ObjectClass) -> &mut ClassNoise {
        match c {
            ObjectClass::Pedestrian => &mut self.pedestrian,
            ObjectClass::Vehicle => &mut self.vehicle,
            ObjectClass::Bicycle => &mut self.bicycle,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("{name} = {v} outside [0, 1]"))
            }
        };
        for c in ObjectClass::ALL {
            let n = self.class(c);
            unit("miss floor", n.miss.floor)?;
            unit("dropout_rate", n.dropout_rate)?;
            unit("duplicate_rate", n.duplicate_rate)?;
            if n.miss.slope.is_nan() || n.miss.slope < 0.0 {
                return Err("miss slope must be non-negative".into());
            }
        }
        unit("confusion_rate", self.confusion_rate)?;
        unit("confidence_coupling", self.confidence_coupling)?;
        unit("spurious confidence low", self.spurious_confidence.0)?;
        unit("spurious confidence high", self.spurious_confidence.1)?;
        if self.spurious_confidence.0 > self.spurious_confidence.1 {
            return Err("spurious confidence range is inverted".into());
        }
        if !non_negative(self.jitter_sigma) || !non_negative(self.confidence_sigma) {
            return Err("sigma must be non-negative".into());
        }
        if !non_negative(self.false_positives_per_frame) {
            return Err("false positive mean must be non-negative".into());
        }
        if self.episode_frames == 0 {
            return Err("episode_frames must be positive".into());
        }
        Ok(())
    }
}

impl Default for NoiseProfile {
    /// Bird's-eye detector at the 832x832 crop. Small pedestrians are hard,
    /// vehicles are easy but occasionally produce a second overlapping box.
    /// The pedestrian miss midpoint is the output of
    /// [`super::calibrate_pedestrian_midpoint`] on the standard scene.
    fn default() -> Self {
        Self {
            pedestrian: ClassNoise {
                miss: MissCurve {
                    floor: 0.08,
                    midpoint_px2: DEFAULT_PEDESTRIAN_MIDPOINT_PX2,
                    slope: 0.04,
                },
                dropout_rate: 0.04,
                duplicate_rate: 0.0,
            },
            vehicle: ClassNoise {
                miss: MissCurve {
                    floor: 0.005,
                    midpoint_px2: 400.0,
                    slope: 0.02,
                },
                dropout_rate: 0.003,
                duplicate_rate: 0.2,
            },
            bicycle: ClassNoise {
                miss: MissCurve {
                    floor: 0.05,
                    midpoint_px2: 150.0,
                    slope: 0.03,
                },
                dropout_rate: 0.02,
                duplicate_rate: 0.0,
            },
            false_positives_per_frame: 0.8,
            jitter_sigma: 0.06,
            confusion_rate: 0.03,
            episode_frames: 30,
            confidence_coupling: 0.5,
            confidence_sigma: 0.08,
            spurious_confidence: (0.05, 0.5),
            duplicate_shift: 0.35,
        }
    }
}

pub const DEFAULT_PEDESTRIAN_MIDPOINT_PX2: f64 = 70.0;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_curve_shape() {
        let c = MissCurve {
            floor: 0.1,
            midpoint_px2: 100.0,
            slope: 0.05,
        };
        assert!((c.probability(100.0) - 0.55).abs() < 1e-12);
        assert!(c.probability(10_000.0) - 0.1 < 1e-9);
        assert!(c.probability(0.0) > 0.99);
        assert!(c.probability(50.0) > c.probability(150.0));
        assert_eq!(MissCurve::NEVER.probability(0.5), 0.0);
        assert_eq!(MissCurve::NEVER.probability(1e6), 0.0);
    }

    #[test]
    fn profiles_validate() {
        NoiseProfile::default().validate().unwrap();
        NoiseProfile::clean().validate().unwrap();
        let mut p = NoiseProfile::default();
        p.vehicle.miss.floor = 1.5;
        assert!(p.validate().is_err());
    }
}
