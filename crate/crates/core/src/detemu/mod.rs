//! Emulated real-time detector: size-dependent misses, clutter, jitter,
//! class confusion and a density-dependent inference cost.

mod ap;
mod emulate;
mod latency;
mod noise;

use std::io::{BufRead, Write};
use std::sync::Arc;

pub use ap::{all_point_ap, evaluate_ap, ApError, ApReport, TruthBox};
pub(crate) use emulate::unit_hash;
pub use emulate::{emulate, format_detection, parse_detection, Detection, Emulator, DETECTION_LOG_HEADER};
pub use latency::{
    inference_latency, sweep_latency, sweep_ratio, LatencyModel, DESIGN_MAX_OBJECTS, MEASURED_FRAME_US,
    SWEEP_FRAMES, SWEEP_HIGH_OBJECTS, SWEEP_INCREASE, SWEEP_LOW_OBJECTS,
};
pub use noise::{ClassNoise, MissCurve, NoiseProfile, DEFAULT_PEDESTRIAN_MIDPOINT_PX2};

use crate::geometry::{CameraModel, GeometryError, SceneMask};
use crate::scenesim::{visible_boxes, ProjectedBox, Scene};
use crate::types::ObjectClass;

/// Pedestrian AP the default profile is tuned toward.
pub const TARGET_PEDESTRIAN_AP: f64 = 0.6631;
pub const TARGET_VEHICLE_AP: f64 = 0.9758;

/// Visible, frame-clipped footprint boxes of every frame in detector pixels.
pub fn project_scene(scene: &Scene, camera: &CameraModel) -> Result<Vec<Vec<ProjectedBox>>, GeometryError> {
    let side = camera.crop_side();
    scene
        .frames
        .iter()
        .map(|f| visible_boxes(f, &camera.world_to_crop, (side, side)))
        .collect()
}

pub fn truth_boxes(projected: &[Vec<ProjectedBox>]) -> Vec<TruthBox> {
    projected
        .iter()
        .enumerate()
        .flat_map(|(i, frame)| {
            frame.iter().map(move |p| TruthBox {
                frame_index: i as u64,
                class: p.class,
                bbox: p.bbox,
            })
        })
        .collect()
}

/// Runs the emulator over every frame; frame indices are positions in
/// `projected`.
pub fn emulate_frames(
    projected: &[Vec<ProjectedBox>],
    profile: &NoiseProfile,
    seed: u64,
    frame_dims: (f64, f64),
    mask: Option<Arc<SceneMask>>,
) -> Vec<Detection> {
    let em = Emulator::new(profile.clone(), seed, frame_dims, mask);
    projected
        .iter()
        .enumerate()
        .flat_map(|(i, boxes)| em.emulate(i as u64, boxes))
        .collect()
}

/// Bisects the pedestrian miss-curve midpoint so the emulated pedestrian AP
/// over `projected` hits `target`. AP falls monotonically (in expectation)
/// as the midpoint grows.
pub fn calibrate_pedestrian_midpoint(
    projected: &[Vec<ProjectedBox>],
    base: &NoiseProfile,
    seed: u64,
    frame_dims: (f64, f64),
    target: f64,
    bracket: (f64, f64),
    iterations: usize,
) -> f64 {
    let truth = truth_boxes(projected);
    let ap_at = |mid: f64| {
        let mut p = base.clone();
        p.pedestrian.miss.midpoint_px2 = mid;
        let dets = emulate_frames(projected, &p, seed, frame_dims, None);
        evaluate_ap(&dets, &truth, 0.5)
            .ok()
            .and_then(|r| r.get(ObjectClass::Pedestrian))
            .unwrap_or(0.0)
    };
    let (mut lo, mut hi) = bracket;
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if ap_at(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn write_detection_log<'a>(
    mut w: impl Write,
    detections: impl IntoIterator<Item = &'a Detection>,
) -> std::io::Result<()> {
    writeln!(w, "{DETECTION_LOG_HEADER}")?;
    for d in detections {
        writeln!(w, "{}", format_detection(d))?;
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum DetectionLogError {
    #[error("detection log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn read_detection_log(r: impl BufRead) -> Result<Vec<Detection>, DetectionLogError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(parse_detection(t).map_err(|message| DetectionLogError::Parse { line: i + 1, message })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenesim::{generate, SceneConfig};

    #[test]
    fn log_round_trip() {
        let cfg = SceneConfig {
            duration_s: 5.0,
            ..SceneConfig::default()
        };
        let scene = generate(&cfg).unwrap();
        let cam = CameraModel::default_birdseye();
        let projected = project_scene(&scene, &cam).unwrap();
        let dets = emulate_frames(&projected, &NoiseProfile::default(), 1, (832.0, 832.0), None);
        let mut buf = Vec::new();
        write_detection_log(&mut buf, &dets).unwrap();
        let back = read_detection_log(&buf[..]).unwrap();
        assert_eq!(back.len(), dets.len());
        for (a, b) in back.iter().zip(&dets) {
            assert_eq!(a.bbox, b.bbox);
            assert_eq!(a.confidence, b.confidence);
            assert_eq!(a.class, b.class);
        }
        assert!(matches!(
            read_detection_log(&b"0,1,2\n"[..]),
            Err(DetectionLogError::Parse { line: 1, .. })
        ));
    }
}
