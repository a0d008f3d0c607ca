//! Seeded synthetic intersection traffic with exact ground truth.
//!
//! Vehicles and bicycles drive right-hand lanes from one arm to another,
//! turning on circular arcs through the central box. Pedestrians walk the
//! sidewalks and crosswalks, alone or in small groups walking in file.
//! Every mover respects a tangential and a lateral acceleration limit.

mod config;
mod generate;
pub mod path;
mod turns;

use std::io::{BufRead, Write};

pub use config::{ArmPolygons, SceneConfig, ScriptedObject, SpawnRates};
pub use generate::{generate, FrameTruth, GroundTruthObject, RouteRecord, Scene, SceneGenerator};
pub use turns::{movement, Arm, Movement, Polygon};

use crate::geometry::{GeometryError, Homography};
use crate::types::{ObjectClass, PixelBox, WorldPoint};

/// 100 km/h.
pub const MAX_SPEED_MPS: f64 = 27.78;
pub const MAX_PEDESTRIAN_SPEED_MPS: f64 = 3.0;
pub const MAX_VEHICLE_ACCEL: f64 = 3.0;
pub const MAX_PEDESTRIAN_ACCEL: f64 = 1.5;
/// Upper bound on the distance between members of one walking group.
pub const GROUP_MAX_SPACING_M: f64 = 1.2;

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error("object {0} never left the scene")]
    IncompleteRoute(u64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("ground-truth log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Projected footprint of one object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedBox {
    pub id: u64,
    pub class: ObjectClass,
    pub bbox: PixelBox,
}

/// Axis-aligned pixel bound of each footprint under `world_to_pixel`.
/// Boxes are not clipped; objects entirely outside `[0, w] x [0, h]` are
/// omitted.
pub fn project_to_pixels(
    frame: &FrameTruth,
    world_to_pixel: &Homography,
    frame_dims: (f64, f64),
) -> Result<Vec<ProjectedBox>, GeometryError> {
    let mut out = Vec::with_capacity(frame.objects.len());
    for o in &frame.objects {
        let mut b = PixelBox::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in o.corners() {
            let (x, y) = world_to_pixel.apply(c.x, c.y)?;
            b.x_min = b.x_min.min(x);
            b.y_min = b.y_min.min(y);
            b.x_max = b.x_max.max(x);
            b.y_max = b.y_max.max(y);
        }
        if b.clip(frame_dims.0, frame_dims.1).is_some() {
            out.push(ProjectedBox {
                id: o.id,
                class: o.class,
                bbox: b,
            });
        }
    }
    Ok(out)
}

/// Same as [`project_to_pixels`] but with every box clipped to the frame,
/// as a detector would see it.
pub fn visible_boxes(
    frame: &FrameTruth,
    world_to_pixel: &Homography,
    frame_dims: (f64, f64),
) -> Result<Vec<ProjectedBox>, GeometryError> {
    Ok(project_to_pixels(frame, world_to_pixel, frame_dims)?
        .into_iter()
        .filter_map(|p| {
            p.bbox.clip(frame_dims.0, frame_dims.1).map(|bbox| ProjectedBox { bbox, ..p })
        })
        .collect())
}

/// Movement of a finished route.
pub fn truth_turn_label(id: u64, route: &RouteRecord) -> Result<Movement, SceneError> {
    match route.exit_frame {
        Some(_) => Ok(movement(route.entry, route.planned_exit)),
        None => Err(SceneError::IncompleteRoute(id)),
    }
}

pub const TRUTH_LOG_HEADER: &str = "# frame_index,timestamp_us,id,class,x,y,vx,vy,len,wid,group_id";

pub fn write_truth_log<'a>(
    mut w: impl Write,
    frames: impl IntoIterator<Item = &'a FrameTruth>,
) -> std::io::Result<()> {
    writeln!(w, "{TRUTH_LOG_HEADER}")?;
    for f in frames {
        write_truth_frame(&mut w, f)?;
    }
    Ok(())
}

pub fn write_truth_frame(mut w: impl Write, f: &FrameTruth) -> std::io::Result<()> {
    for o in &f.objects {
        let group = o.group_id.map_or_else(|| "-".to_string(), |g| g.to_string());
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            f.frame_index,
            f.timestamp_us,
            o.id,
            o.class,
            o.pos.x,
            o.pos.y,
            o.vel.0,
            o.vel.1,
            o.footprint.0,
            o.footprint.1,
            group
        )?;
    }
    Ok(())
}

/// Reads a ground-truth log back into frames. Frames with no objects are
/// reconstructed from `frame_count` and `frame_period_us`.
pub fn read_truth_log(r: impl BufRead, frame_count: u64, frame_period_us: u64) -> Result<Vec<FrameTruth>, SceneError> {
    let mut frames: Vec<FrameTruth> = (0..frame_count)
        .map(|i| FrameTruth {
            frame_index: i,
            timestamp_us: i * frame_period_us,
            objects: Vec::new(),
        })
        .collect();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let err = |message: String| SceneError::Parse { line: i + 1, message };
        let f: Vec<&str> = t.split(',').collect();
        if f.len() != 11 {
            return Err(err(format!("expected 11 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("{s}: {e}")));
        let int = |s: &str| s.parse::<u64>().map_err(|e| err(format!("{s}: {e}")));
        let frame_index = int(f[0])?;
        let obj = GroundTruthObject {
            id: int(f[2])?,
            class: f[3].parse().map_err(|e: crate::types::UnknownClass| err(e.to_string()))?,
            pos: WorldPoint::new(num(f[4])?, num(f[5])?),
            vel: (num(f[6])?, num(f[7])?),
            footprint: (num(f[8])?, num(f[9])?),
            group_id: if f[10] == "-" { None } else { Some(int(f[10])?) },
        };
        let idx = frame_index as usize;
        if idx >= frames.len() {
            return Err(err(format!("frame {frame_index} beyond run length {frame_count}")));
        }
        frames[idx].timestamp_us = int(f[1])?;
        frames[idx].objects.push(obj);
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_object(pos: WorldPoint, footprint: (f64, f64), vel: (f64, f64)) -> FrameTruth {
        FrameTruth {
            frame_index: 0,
            timestamp_us: 0,
            objects: vec![GroundTruthObject {
                id: 1,
                class: ObjectClass::Vehicle,
                pos,
                vel,
                footprint,
                group_id: None,
            }],
        }
    }

    #[test]
    fn unit_scale_projection_centered_at_origin() {
        let f = one_object(WorldPoint::new(0.0, 0.0), (2.0, 2.0), (1.0, 0.0));
        let boxes = project_to_pixels(&f, &Homography::identity(), (100.0, 100.0)).unwrap();
        assert_eq!(boxes.len(), 1);
        let b = boxes[0].bbox;
        assert!((b.x_min + 1.0).abs() < 1e-12 && (b.x_max - 1.0).abs() < 1e-12);
        assert!((b.y_min + 1.0).abs() < 1e-12 && (b.y_max - 1.0).abs() < 1e-12);
    }

    #[test]
    fn object_beyond_frame_omitted() {
        let f = one_object(WorldPoint::new(500.0, 50.0), (2.0, 2.0), (1.0, 0.0));
        assert!(project_to_pixels(&f, &Homography::identity(), (100.0, 100.0)).unwrap().is_empty());
    }

    #[test]
    fn twenty_px_per_meter_vehicle_box() {
        let world_to_px = Homography::birdseye(20.0, 416.0, 416.0).unwrap().inverse().unwrap();
        let f = one_object(WorldPoint::new(0.0, 0.0), (4.5, 1.8), (3.0, 0.0));
        let b = project_to_pixels(&f, &world_to_px, (832.0, 832.0)).unwrap()[0].bbox;
        // corner projection oracle: corners at (+-2.25, +-0.9) m -> +-45, +-18 px
        let corners = [(2.25, 0.9), (2.25, -0.9), (-2.25, -0.9), (-2.25, 0.9)].map(|(x, y)| {
            (416.0 + 20.0 * x, 416.0 - 20.0 * y)
        });
        let w = corners.iter().map(|c| c.0).fold(f64::MIN, f64::max) - corners.iter().map(|c| c.0).fold(f64::MAX, f64::min);
        let h = corners.iter().map(|c| c.1).fold(f64::MIN, f64::max) - corners.iter().map(|c| c.1).fold(f64::MAX, f64::min);
        assert!((w - 90.0).abs() < 1e-9 && (h - 36.0).abs() < 1e-9);
        assert!((b.width() - w).abs() < 1e-9 && (b.height() - h).abs() < 1e-9);
    }

    #[test]
    fn truth_log_round_trip() {
        let cfg = SceneConfig {
            duration_s: 20.0,
            ..SceneConfig::default()
        };
        let scene = generate(&cfg).unwrap();
        let mut buf = Vec::new();
        write_truth_log(&mut buf, &scene.frames).unwrap();
        let back = read_truth_log(&buf[..], cfg.frame_count(), cfg.frame_period_us()).unwrap();
        assert_eq!(back, scene.frames);
    }

    #[test]
    fn incomplete_route_label() {
        let r = RouteRecord {
            class: ObjectClass::Vehicle,
            entry: Arm::North,
            planned_exit: Arm::East,
            spawn_frame: 0,
            exit_frame: None,
        };
        assert!(matches!(truth_turn_label(3, &r), Err(SceneError::IncompleteRoute(3))));
        let done = RouteRecord {
            exit_frame: Some(10),
            ..r
        };
        assert_eq!(truth_turn_label(3, &done).unwrap(), Movement::Left);
    }
}
