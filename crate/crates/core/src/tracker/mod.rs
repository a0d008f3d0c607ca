//! SORT: constant-velocity Kalman boxes, IoU Hungarian association and a
//! tentative / confirmed / dead lifecycle.

mod hungarian;
mod kalman;
mod mota;

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use hungarian::hungarian;
pub use kalman::{box_to_z, measurement_noise, process_noise, KalmanState, Mat4, Mat7, SingularInnovation, Vec4, Vec7, S_MIN};
pub use mota::{evaluate_mota, LabeledBox, MotaCounts, MotaError, MotaReport};

use crate::detemu::Detection;
use crate::geometry::Homography;
use crate::types::{ObjectClass, PixelBox, PixelPoint, WorldPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub iou_threshold: f64,
    /// Frames without an update before a track dies.
    pub max_age: u32,
    /// Consecutive updates before a track is confirmed.
    pub min_hits: u32,
    /// Weight of the appearance term; only used when a hook is installed.
    pub appearance_weight: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.3,
            max_age: 5,
            min_hits: 3,
            appearance_weight: 0.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackerError> {
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err(TrackerError::InvalidConfig("iou_threshold must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.appearance_weight) {
            return Err(TrackerError::InvalidConfig("appearance_weight must lie in [0, 1]".into()));
        }
        if self.min_hits == 0 {
            return Err(TrackerError::InvalidConfig("min_hits must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrackerError {
    #[error("frame {got} presented after frame {last}")]
    OutOfOrderFrame { last: u64, got: u64 },
    #[error("invalid tracker config: {0}")]
    InvalidConfig(String),
    #[error("track log line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Dead,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub track_id: u64,
    pub state: KalmanState,
    pub class: ObjectClass,
    pub hits: u32,
    pub age_since_update: u32,
    pub status: TrackStatus,
    pub history: Vec<(u64, WorldPoint)>,
}

/// Immutable view of a confirmed track in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackSnapshot {
    pub frame_index: u64,
    pub track_id: u64,
    pub class: ObjectClass,
    pub bbox: PixelBox,
    /// `[u, v, s, r]`.
    pub z: [f64; 4],
    /// Center velocity in pixels per frame.
    pub pixel_velocity: (f64, f64),
    pub world: WorldPoint,
}

impl TrackSnapshot {
    pub fn labeled(&self) -> LabeledBox {
        LabeledBox {
            id: self.track_id,
            class: self.class,
            bbox: self.bbox,
        }
    }
}

/// Similarity in [0, 1] between a track and a detection.
pub type AppearanceFn = Arc<dyn Fn(&Track, &Detection) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Association {
    /// (track index, detection index).
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Cost matrix of `1 - IoU (+ weight * (1 - similarity))`; cross-class
/// pairs are infinite.
fn cost_matrix(
    tracks: &[(ObjectClass, PixelBox)],
    detections: &[Detection],
    extra: impl Fn(usize, usize) -> f64,
) -> Vec<Vec<f64>> {
    tracks
        .iter()
        .enumerate()
        .map(|(ti, (class, b))| {
            detections
                .iter()
                .enumerate()
                .map(|(di, d)| {
                    if d.class != *class {
                        f64::INFINITY
                    } else {
                        1.0 - b.iou(&d.bbox) + extra(ti, di)
                    }
                })
                .collect()
        })
        .collect()
}

fn split(cost_pairs: Vec<(usize, usize)>, iou: impl Fn(usize, usize) -> f64, thr: f64, nt: usize, nd: usize) -> Association {
    let mut t_used = vec![false; nt];
    let mut d_used = vec![false; nd];
    let mut matches = Vec::new();
    for (t, d) in cost_pairs {
        if iou(t, d) >= thr {
            t_used[t] = true;
            d_used[d] = true;
            matches.push((t, d));
        }
    }
    Association {
        matches,
        unmatched_tracks: (0..nt).filter(|&i| !t_used[i]).collect(),
        unmatched_detections: (0..nd).filter(|&i| !d_used[i]).collect(),
    }
}

/// Pure-IoU association of predicted track boxes with detections.
pub fn associate(tracks: &[(ObjectClass, PixelBox)], detections: &[Detection], cfg: &TrackerConfig) -> Association {
    let cost = cost_matrix(tracks, detections, |_, _| 0.0);
    let pairs = hungarian(&cost);
    split(
        pairs,
        |t, d| tracks[t].1.iou(&detections[d].bbox),
        cfg.iou_threshold,
        tracks.len(),
        detections.len(),
    )
}

pub struct Sort {
    cfg: TrackerConfig,
    crop_to_world: Homography,
    appearance: Option<AppearanceFn>,
    tracks: Vec<Track>,
    /// Indices into `tracks` of live tracks.
    live: Vec<usize>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl Sort {
    pub fn new(cfg: TrackerConfig, crop_to_world: Homography) -> Result<Self, TrackerError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            crop_to_world,
            appearance: None,
            tracks: Vec::new(),
            live: Vec::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    pub fn with_appearance(mut self, f: AppearanceFn) -> Self {
        self.appearance = Some(f);
        self
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Every track ever created, dead ones included.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn step(&mut self, frame_index: u64, detections: &[Detection]) -> Result<Vec<TrackSnapshot>, TrackerError> {
        let dt = match self.last_frame {
            Some(last) if frame_index <= last => {
                return Err(TrackerError::OutOfOrderFrame { last, got: frame_index })
            }
            Some(last) => (frame_index - last).min(u32::MAX as u64) as u32,
            None => 1,
        };
        self.last_frame = Some(frame_index);

        for &i in &self.live {
            let t = &mut self.tracks[i];
            // a track this stale dies below, so a longer prediction is wasted
            t.state = t.state.predict(dt.min(self.cfg.max_age.saturating_add(1)));
            t.age_since_update = t.age_since_update.saturating_add(dt);
        }
        let predicted: Vec<(ObjectClass, PixelBox)> =
            self.live.iter().map(|&i| (self.tracks[i].class, self.tracks[i].state.to_box())).collect();

        let weight = self.cfg.appearance_weight;
        let cost = match &self.appearance {
            Some(f) if weight > 0.0 => cost_matrix(&predicted, detections, |ti, di| {
                weight * (1.0 - f(&self.tracks[self.live[ti]], &detections[di]).clamp(0.0, 1.0))
            }),
            _ => cost_matrix(&predicted, detections, |_, _| 0.0),
        };
        let assoc = split(
            hungarian(&cost),
            |t, d| predicted[t].1.iou(&detections[d].bbox),
            self.cfg.iou_threshold,
            predicted.len(),
            detections.len(),
        );

        let mut unmatched_dets = assoc.unmatched_detections;
        for &(ti, di) in &assoc.matches {
            let t = &mut self.tracks[self.live[ti]];
            match t.state.update(&detections[di].bbox) {
                Ok(s) => {
                    t.state = s;
                    t.hits += 1;
                    t.age_since_update = 0;
                    if t.hits >= self.cfg.min_hits {
                        t.status = TrackStatus::Confirmed;
                    }
                }
                Err(SingularInnovation) => {
                    t.status = TrackStatus::Dead;
                    unmatched_dets.push(di);
                }
            }
        }
        for &ti in &assoc.unmatched_tracks {
            self.tracks[self.live[ti]].hits = 0;
        }
        for &i in &self.live {
            let t = &mut self.tracks[i];
            if t.age_since_update > self.cfg.max_age {
                t.status = TrackStatus::Dead;
            }
        }
        unmatched_dets.sort_unstable();
        for di in unmatched_dets {
            let d = &detections[di];
            let status = if self.cfg.min_hits <= 1 {
                TrackStatus::Confirmed
            } else {
                TrackStatus::Tentative
            };
            self.tracks.push(Track {
                track_id: self.next_id,
                state: KalmanState::from_box(&d.bbox),
                class: d.class,
                hits: 1,
                age_since_update: 0,
                status,
                history: Vec::new(),
            });
            self.live.push(self.tracks.len() - 1);
            self.next_id += 1;
        }
        let tracks = &self.tracks;
        self.live.retain(|&i| tracks[i].status != TrackStatus::Dead);

        let mut out = Vec::new();
        for &i in &self.live {
            let t = &mut self.tracks[i];
            if t.age_since_update != 0 {
                continue;
            }
            let m = &t.state.mean;
            let world = self
                .crop_to_world
                .apply(m[0], m[1])
                .map(|(x, y)| WorldPoint::new(x, y))
                .unwrap_or(WorldPoint::new(f64::NAN, f64::NAN));
            if world.x.is_finite() {
                t.history.push((frame_index, world));
            }
            if t.status == TrackStatus::Confirmed {
                out.push(TrackSnapshot {
                    frame_index,
                    track_id: t.track_id,
                    class: t.class,
                    bbox: t.state.to_box(),
                    z: [m[0], m[1], m[2], m[3]],
                    pixel_velocity: (m[4], m[5]),
                    world,
                });
            }
        }
        out.sort_by_key(|s| s.track_id);
        Ok(out)
    }
}

/// World velocity (m/s) of a pixel-space velocity at pixel `p`.
pub fn world_velocity(
    crop_to_world: &Homography,
    p: PixelPoint,
    pixel_velocity: (f64, f64),
    frame_rate: f64,
) -> Option<(f64, f64)> {
    let a = crop_to_world.apply(p.x, p.y).ok()?;
    let b = crop_to_world.apply(p.x + pixel_velocity.0, p.y + pixel_velocity.1).ok()?;
    Some(((b.0 - a.0) * frame_rate, (b.1 - a.1) * frame_rate))
}

pub const TRACK_LOG_HEADER: &str = "# frame_index,track_id,class,u,v,s,r,world_x,world_y";

pub fn write_track_frame(mut w: impl Write, snapshots: &[TrackSnapshot]) -> std::io::Result<()> {
    for s in snapshots {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            s.frame_index, s.track_id, s.class, s.z[0], s.z[1], s.z[2], s.z[3], s.world.x, s.world.y
        )?;
    }
    Ok(())
}

/// One record of a track log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRecord {
    pub frame_index: u64,
    pub track_id: u64,
    pub class: ObjectClass,
    pub z: [f64; 4],
    pub world: WorldPoint,
}

impl TrackRecord {
    pub fn bbox(&self) -> PixelBox {
        let [u, v, s, r] = self.z;
        let w = (s * r).sqrt();
        PixelBox::from_center(u, v, w, s / w)
    }
}

pub fn read_track_log(r: impl BufRead) -> Result<Vec<TrackRecord>, TrackerError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let err = |message: String| TrackerError::Parse { line: i + 1, message };
        let line = line.map_err(|e| err(e.to_string()))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = t.split(',').collect();
        if f.len() != 9 {
            return Err(err(format!("expected 9 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("{s}: {e}")));
        let int = |s: &str| s.parse::<u64>().map_err(|e| err(format!("{s}: {e}")));
        out.push(TrackRecord {
            frame_index: int(f[0])?,
            track_id: int(f[1])?,
            class: f[2].parse().map_err(|e: crate::types::UnknownClass| err(e.to_string()))?,
            z: [num(f[3])?, num(f[4])?, num(f[5])?, num(f[6])?],
            world: WorldPoint::new(num(f[7])?, num(f[8])?),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(frame: u64, x: f64) -> Detection {
        Detection {
            frame_index: frame,
            bbox: PixelBox::new(x, 100.0, x + 90.0, 136.0),
            class: ObjectClass::Vehicle,
            confidence: 0.9,
            truth_id: None,
        }
    }

    fn sort() -> Sort {
        Sort::new(TrackerConfig::default(), Homography::identity()).unwrap()
    }

    #[test]
    fn single_vehicle_confirms_once() {
        let mut s = sort();
        let mut ids = std::collections::BTreeSet::new();
        for f in 0..10 {
            let out = s.step(f, &[det(f, 10.0 + 3.0 * f as f64)]).unwrap();
            if f + 1 < 3 {
                assert!(out.is_empty());
            } else {
                assert_eq!(out.len(), 1);
                ids.insert(out[0].track_id);
            }
        }
        assert_eq!(ids.len(), 1);
        assert_eq!(s.tracks().len(), 1);
    }

    #[test]
    fn gap_beyond_max_age_spawns_new_id() {
        let mut s = sort();
        for f in 0..5 {
            s.step(f, &[det(f, 10.0)]).unwrap();
        }
        let first = s.tracks()[0].track_id;
        for f in 5..11 {
            s.step(f, &[]).unwrap();
        }
        assert_eq!(s.tracks()[0].status, TrackStatus::Dead);
        s.step(11, &[det(11, 10.0)]).unwrap();
        assert_eq!(s.tracks().len(), 2);
        assert!(s.tracks()[1].track_id > first);
    }

    #[test]
    fn gap_within_max_age_keeps_id() {
        let mut s = sort();
        for f in 0..5 {
            s.step(f, &[det(f, 10.0)]).unwrap();
        }
        let out = s.step(10, &[det(10, 10.0)]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(s.tracks().len(), 1);
    }

    #[test]
    fn out_of_order_frame() {
        let mut s = sort();
        s.step(3, &[]).unwrap();
        assert_eq!(s.step(3, &[]), Err(TrackerError::OutOfOrderFrame { last: 3, got: 3 }));
    }

    #[test]
    fn cross_class_never_associates() {
        let mut ped = det(0, 10.0);
        ped.class = ObjectClass::Pedestrian;
        let a = associate(&[(ObjectClass::Vehicle, det(0, 10.0).bbox)], &[ped], &TrackerConfig::default());
        assert!(a.matches.is_empty());
        assert_eq!(a.unmatched_tracks, vec![0]);
        assert_eq!(a.unmatched_detections, vec![0]);
    }

    #[test]
    fn no_detections_all_tracks_unmatched() {
        let t = [(ObjectClass::Vehicle, det(0, 0.0).bbox), (ObjectClass::Vehicle, det(0, 300.0).bbox)];
        let a = associate(&t, &[], &TrackerConfig::default());
        assert_eq!(a.unmatched_tracks, vec![0, 1]);
    }

    #[test]
    fn appearance_hook_breaks_ambiguity() {
        let mut s = Sort::new(
            TrackerConfig {
                appearance_weight: 1.0,
                min_hits: 1,
                ..TrackerConfig::default()
            },
            Homography::identity(),
        )
        .unwrap()
        .with_appearance(Arc::new(|t: &Track, d: &Detection| {
            if (t.track_id == 1) == (d.confidence > 0.5) {
                1.0
            } else {
                0.0
            }
        }));
        let mut a = det(0, 10.0);
        a.confidence = 0.9;
        s.step(0, &[a]).unwrap();
        // a lower-IoU detection that looks right vs a higher-IoU one that does not
        let mut good = det(1, 40.0);
        good.confidence = 0.9;
        let mut bad = det(1, 12.0);
        bad.confidence = 0.1;
        let out = s.step(1, &[bad, good]).unwrap();
        let t1 = out.iter().find(|o| o.track_id == 1).unwrap();
        // pulled toward the good detection (center 85), not the bad one (57)
        assert!(t1.bbox.center().x > 62.0);
    }

    #[test]
    fn track_log_round_trip() {
        let mut s = Sort::new(
            TrackerConfig {
                min_hits: 1,
                ..TrackerConfig::default()
            },
            Homography::birdseye(20.0, 416.0, 416.0).unwrap(),
        )
        .unwrap();
        let out = s.step(0, &[det(0, 10.0)]).unwrap();
        let mut buf = Vec::new();
        write_track_frame(&mut buf, &out).unwrap();
        let back = read_track_log(&buf[..]).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].track_id, out[0].track_id);
        assert_eq!(back[0].z, out[0].z);
        assert!((back[0].bbox().x_min - out[0].bbox.x_min).abs() < 1e-9);
    }
}
