//! Radar-screen broadcast: per-frame track snapshots on the wire, and the
//! per-stage latency budget.

mod budget;
mod sink;
mod wire;

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::geometry::Homography;
use crate::tracker::{world_velocity, TrackSnapshot};

pub use budget::{
    budget_report, nearest_rank, write_budget_csv, write_traces_csv, BudgetReport, EmptyTraces, LatencyTrace, StageStats,
    DEFAULT_BUDGET_US, STAGES,
};
pub use sink::{read_capture, DatagramSink, FileSink, MemorySink, UdpSink, DEFAULT_MULTICAST};
pub use wire::{
    datagram_len, decode, encode, max_objects_for_mtu, RadarClass, RadarMessage, RadarObject, WireError, HEADER_LEN,
    MAGIC, MAX_OBJECTS, OBJECT_LEN, POSITION_BOUND_MM, SPEED_BOUND_MM_S, VERSION,
};

/// Microsecond pipeline clock.
pub trait Clock: Send + Sync {
    fn now_us(&self) -> u64;
}

/// Monotonic clock reading `base_us` plus the real time elapsed since the
/// last rebase.
#[derive(Debug)]
pub struct PipelineClock {
    base_us: u64,
    anchor: Instant,
}

impl PipelineClock {
    pub fn new() -> Self {
        Self::starting_at(0)
    }

    pub fn starting_at(base_us: u64) -> Self {
        Self {
            base_us,
            anchor: Instant::now(),
        }
    }

    pub fn rebase(&mut self, base_us: u64) {
        self.base_us = base_us;
        self.anchor = Instant::now();
    }
}

impl Default for PipelineClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for PipelineClock {
    fn now_us(&self) -> u64 {
        self.base_us + self.anchor.elapsed().as_micros() as u64
    }
}

/// Clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(t: u64) -> Self {
        Self(AtomicU64::new(t))
    }

    pub fn set(&self, t: u64) {
        self.0.store(t, Ordering::SeqCst);
    }

    pub fn advance(&self, dt: u64) {
        self.0.fetch_add(dt, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_us(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

/// Meters to millimeters, truncating toward zero and saturating at the
/// `i32` range.
pub fn to_mm(m: f64) -> i32 {
    (m * 1000.0).trunc() as i32
}

/// Wire object for a confirmed track. Speeds above the plausibility bound
/// are scaled down onto it; track ids wrap at 2^32.
pub fn radar_object(s: &TrackSnapshot, crop_to_world: &Homography, frame_rate: f64) -> RadarObject {
    let (vx, vy) = world_velocity(crop_to_world, s.bbox.center(), s.pixel_velocity, frame_rate).unwrap_or((0.0, 0.0));
    let (mut vx, mut vy) = (to_mm(vx), to_mm(vy));
    let speed = (vx as f64).hypot(vy as f64);
    if speed > SPEED_BOUND_MM_S {
        let k = SPEED_BOUND_MM_S / speed;
        vx = (vx as f64 * k).trunc() as i32;
        vy = (vy as f64 * k).trunc() as i32;
    }
    RadarObject {
        track_id: s.track_id as u32,
        class: s.class.into(),
        x_mm: to_mm(s.world.x),
        y_mm: to_mm(s.world.y),
        vx_mm_s: vx,
        vy_mm_s: vy,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BroadcastConfig {
    pub intersection_id: u32,
    pub mtu_bytes: usize,
}

impl Default for BroadcastConfig {
    fn default() -> Self {
        Self {
            intersection_id: 1,
            mtu_bytes: 9000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DropReason {
    /// More objects than one datagram of the configured MTU holds.
    OverMtu { objects: usize, cap: usize },
    Encode(WireError),
    Sink(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedFrame {
    pub frame_seq: u64,
    pub reason: DropReason,
}

/// Single-sender encoder. Every call consumes a sequence number, so
/// receivers see dropped frames as gaps.
pub struct Broadcaster {
    config: BroadcastConfig,
    next_seq: u64,
    sink: Box<dyn DatagramSink>,
    sent: u64,
    dropped: Vec<DroppedFrame>,
}

impl Broadcaster {
    pub fn new(config: BroadcastConfig, sink: Box<dyn DatagramSink>) -> Self {
        Self {
            config,
            next_seq: 0,
            sink,
            sent: 0,
            dropped: Vec::new(),
        }
    }

    pub fn sent(&self) -> u64 {
        self.sent
    }

    pub fn dropped(&self) -> &[DroppedFrame] {
        &self.dropped
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.sink.flush()
    }

    /// Encodes and sends one frame, stamping the encode and broadcast
    /// times of `trace` (its earlier stamps are kept). A frame that cannot
    /// be encoded or sent is recorded as dropped; nothing is retried.
    pub fn broadcast_frame(
        &mut self,
        objects: &[RadarObject],
        capture_ts_us: u64,
        mut trace: LatencyTrace,
        clock: &dyn Clock,
    ) -> LatencyTrace {
        let seq = self.next_seq;
        self.next_seq += 1;
        trace.frame_seq = seq;
        let cap = max_objects_for_mtu(self.config.mtu_bytes);
        let encoded = if objects.len() > cap {
            Err(DropReason::OverMtu {
                objects: objects.len(),
                cap,
            })
        } else {
            encode(&RadarMessage {
                version: VERSION,
                intersection_id: self.config.intersection_id,
                frame_seq: seq,
                capture_ts_us,
                objects: objects.to_vec(),
            })
            .map_err(DropReason::Encode)
        };
        trace.t_encode_done = clock.now_us().max(trace.t_analyze_done);
        let outcome = encoded.and_then(|bytes| self.sink.send(&bytes).map_err(|e| DropReason::Sink(e.to_string())));
        trace.t_broadcast_done = clock.now_us().max(trace.t_encode_done);
        match outcome {
            Ok(()) => self.sent += 1,
            Err(reason) => self.dropped.push(DroppedFrame { frame_seq: seq, reason }),
        }
        trace
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeqObservation {
    First,
    InOrder,
    /// `missing` sequence numbers were skipped.
    Gap { missing: u64 },
    /// Not newer than the last accepted message.
    Stale,
}

/// Receiver-side view of one sender's sequence numbers.
#[derive(Debug, Clone, Copy, Default)]
pub struct SequenceMonitor {
    last: Option<u64>,
    pub received: u64,
    pub missing: u64,
    pub stale: u64,
}

impl SequenceMonitor {
    pub fn observe(&mut self, seq: u64) -> SeqObservation {
        let obs = match self.last {
            None => SeqObservation::First,
            Some(l) if seq <= l => SeqObservation::Stale,
            Some(l) if seq == l + 1 => SeqObservation::InOrder,
            Some(l) => SeqObservation::Gap { missing: seq - l - 1 },
        };
        match obs {
            SeqObservation::Stale => self.stale += 1,
            SeqObservation::Gap { missing } => {
                self.missing += missing;
                self.received += 1;
                self.last = Some(seq);
            }
            _ => {
                self.received += 1;
                self.last = Some(seq);
            }
        }
        obs
    }
}
