use serde::{Deserialize, Serialize};

/// Linear per-frame inference cost in whole microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub base_us: u64,
    pub per_object_us: u64,
}

/// Frames in one clip of the density sweep: 90 s at 30 fps. The sweep
/// compares the sparsest and the densest clip.
pub const SWEEP_FRAMES: u64 = 90 * 30;
pub const SWEEP_LOW_OBJECTS: u64 = 4_000;
pub const SWEEP_HIGH_OBJECTS: u64 = 26_000;
/// Measured frame time of the detector at its design load.
pub const MEASURED_FRAME_US: f64 = 1e6 / 34.99;
/// Object count the measured frame time is attributed to.
pub const DESIGN_MAX_OBJECTS: u64 = 50;
/// Aggregate cost increase from the low to the high density sweep.
pub const SWEEP_INCREASE: f64 = 0.40;

impl LatencyModel {
    pub fn new(base_us: u64, per_object_us: u64) -> Result<Self, String> {
        if base_us == 0 {
            return Err("base_us must be positive".into());
        }
        Ok(Self { base_us, per_object_us })
    }

    /// Solves the two-point calibration: the sweep ratio fixes
    /// `per_object / base`, the measured frame time at the design load fixes
    /// the scale. Rounded to whole microseconds.
    pub fn calibrated() -> Self {
        let frames = SWEEP_FRAMES as f64;
        let ratio = 1.0 + SWEEP_INCREASE;
        let rel = (ratio - 1.0) * frames
            / (SWEEP_HIGH_OBJECTS as f64 - ratio * SWEEP_LOW_OBJECTS as f64);
        let base = (MEASURED_FRAME_US.round() / (1.0 + DESIGN_MAX_OBJECTS as f64 * rel)).round();
        Self {
            base_us: base as u64,
            per_object_us: (rel * base).round() as u64,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        Self::new(self.base_us, self.per_object_us).map(|_| ())
    }
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            base_us: 7_836,
            per_object_us: 415,
        }
    }
}

pub fn inference_latency(model: &LatencyModel, object_count: u64) -> u64 {
    model.base_us + model.per_object_us * object_count
}

/// Total inference time over `frames` frames carrying `total_objects`
/// objects spread as evenly as possible.
pub fn sweep_latency(model: &LatencyModel, frames: u64, total_objects: u64) -> u64 {
    if frames == 0 {
        return 0;
    }
    let per = total_objects / frames;
    let extra = total_objects % frames;
    extra * inference_latency(model, per + 1) + (frames - extra) * inference_latency(model, per)
}

/// Aggregate cost of the densest clip relative to the sparsest one.
pub fn sweep_ratio(model: &LatencyModel) -> f64 {
    sweep_latency(model, SWEEP_FRAMES, SWEEP_HIGH_OBJECTS) as f64
        / sweep_latency(model, SWEEP_FRAMES, SWEEP_LOW_OBJECTS) as f64
}
