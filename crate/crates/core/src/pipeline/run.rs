use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::config::{RunConfig, RunMode, SinkKind};
use super::logs::*;
use super::queue::{OverwriteQueue, STAGE_QUEUE_DEPTH};
use super::{PipelineError, Stage};
use crate::analytics::{pairwise_violations, PositionFrame};
use crate::anonymize::{blur_boxes, blur_regions, render_frame, sensitive_regions, RegionBox};
use crate::detemu::{inference_latency, read_detection_log, Detection, Emulator, LatencyModel, DETECTION_LOG_HEADER};
use crate::geometry::{CameraModel, Homography};
use crate::radar::{
    radar_object, to_mm, write_traces_csv, Broadcaster, Clock, DatagramSink, FileSink, LatencyTrace, PipelineClock,
    RadarObject, UdpSink,
};
use crate::scenesim::{read_truth_log, visible_boxes, write_truth_frame, FrameTruth, ProjectedBox, SceneGenerator, TRUTH_LOG_HEADER};
use crate::tracker::{read_track_log, write_track_frame, Sort, TrackRecord, TrackSnapshot, TRACK_LOG_HEADER};
use crate::types::ObjectClass;

/// Counters a run reports besides its metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RunStats {
    pub frames: u64,
    pub datagrams_sent: u64,
    pub datagrams_dropped: u64,
    /// Frames pushed out of full stage queues (realtime mode only).
    pub queue_overwrites: u64,
    /// Blur regions clipped to the frame.
    pub clipped_regions: u64,
    pub sampled_frames: u64,
}

fn create(dir: &Path, name: &str, stage: Stage) -> Result<BufWriter<File>, PipelineError> {
    let p = dir.join(name);
    File::create(&p)
        .map(BufWriter::new)
        .map_err(|e| PipelineError::new(stage, e).context(p.display()))
}

pub(crate) fn open(dir: &Path, name: &str, stage: Stage) -> Result<BufReader<File>, PipelineError> {
    let p = dir.join(name);
    File::open(&p)
        .map(BufReader::new)
        .map_err(|_| PipelineError::missing_log(stage, &p))
}

fn io(stage: Stage) -> impl Fn(std::io::Error) -> PipelineError {
    move |e| PipelineError::new(stage, e)
}

pub(crate) fn crop_dims(camera: &CameraModel) -> (f64, f64) {
    (camera.crop_side(), camera.crop_side())
}

pub fn make_sink(cfg: &RunConfig, out: &Path) -> Result<Option<Box<dyn DatagramSink>>, PipelineError> {
    Ok(match cfg.radar.sink {
        SinkKind::None => None,
        SinkKind::File => Some(Box::new(FileSink::create(out.join(CAPTURE_FILE)).map_err(io(Stage::Broadcast))?)),
        SinkKind::Udp => {
            let addr = cfg
                .radar
                .udp_target
                .parse()
                .map_err(|e| PipelineError::new(Stage::Config, e))?;
            Some(Box::new(UdpSink::new(addr).map_err(io(Stage::Broadcast))?))
        }
    })
}

struct NullSink;

impl DatagramSink for NullSink {
    fn send(&mut self, _: &[u8]) -> std::io::Result<()> {
        Ok(())
    }
}

struct DetectStage {
    emulator: Emulator,
    latency: LatencyModel,
    log: BufWriter<File>,
}

impl DetectStage {
    fn new(cfg: &RunConfig, camera: &CameraModel, out: &Path) -> Result<Self, PipelineError> {
        let mask = cfg.camera.load_mask()?;
        let mut log = create(out, DETECTION_LOG, Stage::Detect)?;
        writeln!(log, "{DETECTION_LOG_HEADER}").map_err(io(Stage::Detect))?;
        Ok(Self {
            emulator: Emulator::new(cfg.noise.clone(), cfg.detector_seed(), crop_dims(camera), mask),
            latency: cfg.latency,
            log,
        })
    }

    /// Detections and the emulated inference time for the frame.
    fn run(&mut self, frame: u64, boxes: &[ProjectedBox]) -> Result<(Vec<Detection>, u64), PipelineError> {
        let dets = self.emulator.emulate(frame, boxes);
        for d in &dets {
            writeln!(self.log, "{}", crate::detemu::format_detection(d)).map_err(io(Stage::Detect))?;
        }
        Ok((dets, inference_latency(&self.latency, boxes.len() as u64)))
    }
}

struct TrackStage {
    sort: Sort,
    log: BufWriter<File>,
}

impl TrackStage {
    fn new(cfg: &RunConfig, camera: &CameraModel, out: &Path) -> Result<Self, PipelineError> {
        let mut log = create(out, TRACK_LOG, Stage::Track)?;
        writeln!(log, "{TRACK_LOG_HEADER}").map_err(io(Stage::Track))?;
        Ok(Self {
            sort: Sort::new(cfg.tracker, camera.crop_to_world).map_err(|e| PipelineError::new(Stage::Track, e))?,
            log,
        })
    }

    fn run(&mut self, frame: u64, dets: &[Detection]) -> Result<Vec<TrackSnapshot>, PipelineError> {
        let snaps = self.sort.step(frame, dets).map_err(|e| PipelineError::new(Stage::Track, e))?;
        write_track_frame(&mut self.log, &snaps).map_err(io(Stage::Track))?;
        Ok(snaps)
    }
}

struct AnalyzeStage {
    threshold_m: f64,
    flags: BufWriter<File>,
    anonymize: bool,
    sample_every: u64,
    kernel: usize,
    regions: crate::anonymize::RegionSpec,
    frames_dir: std::path::PathBuf,
    side: usize,
    clipped: u64,
    sampled: u64,
}

impl AnalyzeStage {
    fn new(cfg: &RunConfig, camera: &CameraModel, out: &Path) -> Result<Self, PipelineError> {
        let mut flags = create(out, FLAGS_LOG, Stage::Analyze)?;
        writeln!(flags, "{FLAGS_HEADER}").map_err(io(Stage::Analyze))?;
        let frames_dir = out.join(FRAMES_DIR);
        if cfg.anonymize.enabled && cfg.anonymize.sample_every > 0 {
            std::fs::create_dir_all(&frames_dir).map_err(io(Stage::Anonymize))?;
        }
        Ok(Self {
            threshold_m: cfg.distancing.threshold_m,
            flags,
            anonymize: cfg.anonymize.enabled,
            sample_every: cfg.anonymize.sample_every,
            kernel: cfg.anonymize.kernel,
            regions: cfg.anonymize.regions,
            frames_dir,
            side: camera.crop_side() as usize,
            clipped: 0,
            sampled: 0,
        })
    }

    fn run(
        &mut self,
        frame: u64,
        snaps: &[TrackSnapshot],
        boxes: &[ProjectedBox],
        dets: &[Detection],
    ) -> Result<(), PipelineError> {
        let positions = PositionFrame {
            frame_index: frame,
            positions: snaps
                .iter()
                .filter(|s| s.class == ObjectClass::Pedestrian)
                .map(|s| (s.track_id, s.world))
                .collect(),
        };
        let flags = pairwise_violations(std::slice::from_ref(&positions), self.threshold_m);
        write_flags(&mut self.flags, &flags).map_err(io(Stage::Analyze))?;
        if !self.anonymize {
            return Ok(());
        }
        let blur = blur_boxes(dets, &self.regions);
        let bounds = RegionBox::new(0, 0, self.side as i64, self.side as i64);
        self.clipped += blur.iter().filter(|b| b.intersect(&bounds) != **b).count() as u64;
        if self.sample_every > 0 && frame.is_multiple_of(self.sample_every) {
            let truth = sensitive_regions(boxes, &self.regions);
            let raw = render_frame(self.side, self.side, boxes, &truth);
            let blurred = blur_regions(&raw, &blur, self.kernel).map_err(|e| PipelineError::new(Stage::Anonymize, e))?;
            let p = self.frames_dir.join(format!("frame_{frame:06}.pgm"));
            let f = File::create(&p).map_err(io(Stage::Anonymize))?;
            blurred
                .frame
                .write_pgm(BufWriter::new(f))
                .map_err(|e| PipelineError::new(Stage::Anonymize, e))?;
            self.sampled += 1;
        }
        Ok(())
    }
}

struct BroadcastStage {
    broadcaster: Broadcaster,
    crop_to_world: Homography,
    frame_rate: f64,
}

impl BroadcastStage {
    fn new(cfg: &RunConfig, camera: &CameraModel, out: &Path) -> Result<Self, PipelineError> {
        let sink = make_sink(cfg, out)?.unwrap_or_else(|| Box::new(NullSink));
        Ok(Self {
            broadcaster: Broadcaster::new(cfg.radar.broadcast, sink),
            crop_to_world: camera.crop_to_world,
            frame_rate: cfg.scene.frame_rate,
        })
    }

    fn run(&mut self, snaps: &[TrackSnapshot], trace: LatencyTrace, clock: &dyn Clock) -> LatencyTrace {
        let objects: Vec<RadarObject> = snaps
            .iter()
            .map(|s| radar_object(s, &self.crop_to_world, self.frame_rate))
            .collect();
        self.broadcaster.broadcast_frame(&objects, trace.t_acquire, trace, clock)
    }
}

fn write_truth_header(out: &Path) -> Result<BufWriter<File>, PipelineError> {
    let mut w = create(out, TRUTH_LOG, Stage::Generate)?;
    writeln!(w, "{TRUTH_LOG_HEADER}").map_err(io(Stage::Generate))?;
    Ok(w)
}

fn write_routes_file(out: &Path, gen: SceneGenerator) -> Result<(), PipelineError> {
    let mut w = create(out, ROUTES_LOG, Stage::Generate)?;
    write_routes(&mut w, &gen.into_routes()).map_err(io(Stage::Generate))?;
    w.flush().map_err(io(Stage::Generate))
}

fn elapsed_us(t: Instant) -> u64 {
    t.elapsed().as_micros() as u64
}

/// Executes every stage over the configured scene and writes the logs.
pub fn execute(cfg: &RunConfig, out: &Path) -> Result<RunStats, PipelineError> {
    match cfg.mode {
        RunMode::Virtual => run_virtual(cfg, out),
        RunMode::Realtime => run_realtime(cfg, out),
    }
}

/// One thread. The acquisition clock is simulated: frame `f` arrives at
/// `f` frame periods, detection takes the emulated latency, and the other
/// stages take their measured wall time. Each stage starts once its input
/// is ready and it has finished the previous frame, as pipelined workers
/// would.
fn run_virtual(cfg: &RunConfig, out: &Path) -> Result<RunStats, PipelineError> {
    let camera = cfg.camera.build()?;
    let dims = crop_dims(&camera);
    let mut gen = SceneGenerator::new(&cfg.scene_config()).map_err(|e| PipelineError::new(Stage::Generate, e))?;
    let mut truth_log = write_truth_header(out)?;
    let mut detect = DetectStage::new(cfg, &camera, out)?;
    let mut track = TrackStage::new(cfg, &camera, out)?;
    let mut analyze = AnalyzeStage::new(cfg, &camera, out)?;
    let mut broadcast = BroadcastStage::new(cfg, &camera, out)?;
    let mut traces = Vec::new();
    let mut prev = LatencyTrace::default();
    let mut clock = PipelineClock::new();
    for truth in gen.by_ref() {
        let f = truth.frame_index;
        write_truth_frame(&mut truth_log, &truth).map_err(io(Stage::Generate))?;
        let boxes = visible_boxes(&truth, &camera.world_to_crop, dims).map_err(|e| PipelineError::new(Stage::Generate, e))?;
        let mut trace = LatencyTrace {
            t_acquire: truth.timestamp_us,
            ..Default::default()
        };
        let (dets, latency) = detect.run(f, &boxes)?;
        trace.t_detect_done = trace.t_acquire.max(prev.t_detect_done) + latency;

        let t = Instant::now();
        let snaps = track.run(f, &dets)?;
        trace.t_track_done = trace.t_detect_done.max(prev.t_track_done) + elapsed_us(t);

        let t = Instant::now();
        analyze.run(f, &snaps, &boxes, &dets)?;
        trace.t_analyze_done = trace.t_track_done.max(prev.t_analyze_done) + elapsed_us(t);

        clock.rebase(trace.t_analyze_done.max(prev.t_broadcast_done));
        let trace = broadcast.run(&snaps, trace, &clock);
        traces.push(trace);
        prev = trace;
    }
    truth_log.flush().map_err(io(Stage::Generate))?;
    write_routes_file(out, gen)?;
    finish(detect, track, analyze, broadcast, &traces, 0, out)
}

fn finish(
    mut detect: DetectStage,
    mut track: TrackStage,
    mut analyze: AnalyzeStage,
    mut broadcast: BroadcastStage,
    traces: &[LatencyTrace],
    queue_overwrites: u64,
    out: &Path,
) -> Result<RunStats, PipelineError> {
    detect.log.flush().map_err(io(Stage::Detect))?;
    track.log.flush().map_err(io(Stage::Track))?;
    analyze.flags.flush().map_err(io(Stage::Analyze))?;
    broadcast.broadcaster.flush().map_err(io(Stage::Broadcast))?;
    let mut w = create(out, TRACES_LOG, Stage::Broadcast)?;
    write_traces_csv(&mut w, traces).map_err(io(Stage::Broadcast))?;
    w.flush().map_err(io(Stage::Broadcast))?;
    Ok(RunStats {
        frames: traces.len() as u64,
        datagrams_sent: broadcast.broadcaster.sent(),
        datagrams_dropped: broadcast.broadcaster.dropped().len() as u64,
        queue_overwrites,
        clipped_regions: analyze.clipped,
        sampled_frames: analyze.sampled,
    })
}

struct Acquired {
    frame: u64,
    t_acquire: u64,
    boxes: Vec<ProjectedBox>,
}

struct Detected {
    acquired: Acquired,
    t_detect_done: u64,
    dets: Vec<Detection>,
}

struct Tracked {
    trace: LatencyTrace,
    snaps: Vec<TrackSnapshot>,
}

/// One worker per stage joined by depth-2 overwrite queues, paced at the
/// frame rate on the wall clock. Detection sleeps for the emulated
/// latency. Frames pushed out of a full queue are lost, so logs depend on
/// scheduling.
fn run_realtime(cfg: &RunConfig, out: &Path) -> Result<RunStats, PipelineError> {
    let camera = cfg.camera.build()?;
    let dims = crop_dims(&camera);
    let mut gen = SceneGenerator::new(&cfg.scene_config()).map_err(|e| PipelineError::new(Stage::Generate, e))?;
    let mut truth_log = write_truth_header(out)?;
    let mut detect = DetectStage::new(cfg, &camera, out)?;
    let mut track = TrackStage::new(cfg, &camera, out)?;
    let mut analyze = AnalyzeStage::new(cfg, &camera, out)?;
    let mut broadcast = BroadcastStage::new(cfg, &camera, out)?;
    let period = Duration::from_micros(cfg.scene_config().frame_period_us());
    let clock = Arc::new(PipelineClock::new());
    let q1 = OverwriteQueue::<Acquired>::new(STAGE_QUEUE_DEPTH);
    let q2 = OverwriteQueue::<Detected>::new(STAGE_QUEUE_DEPTH);
    let q3 = OverwriteQueue::<Tracked>::new(STAGE_QUEUE_DEPTH);

    let (acq, det, trk, traces) = std::thread::scope(|s| {
        let acquire = s.spawn(|| -> Result<(), PipelineError> {
            let start = Instant::now();
            let result = (|| {
                for truth in gen.by_ref() {
                    let due = start + period * truth.frame_index as u32;
                    if let Some(wait) = due.checked_duration_since(Instant::now()) {
                        std::thread::sleep(wait);
                    }
                    let t_acquire = clock.now_us();
                    write_truth_frame(&mut truth_log, &truth).map_err(io(Stage::Generate))?;
                    let boxes = visible_boxes(&truth, &camera.world_to_crop, dims)
                        .map_err(|e| PipelineError::new(Stage::Generate, e))?;
                    q1.push(Acquired {
                        frame: truth.frame_index,
                        t_acquire,
                        boxes,
                    });
                }
                truth_log.flush().map_err(io(Stage::Generate))
            })();
            q1.close();
            result
        });
        let detector = s.spawn(|| -> Result<(), PipelineError> {
            let result = (|| {
                while let Some(a) = q1.pop() {
                    let t = Instant::now();
                    let (dets, latency) = detect.run(a.frame, &a.boxes)?;
                    if let Some(rest) = Duration::from_micros(latency).checked_sub(t.elapsed()) {
                        std::thread::sleep(rest);
                    }
                    q2.push(Detected {
                        t_detect_done: clock.now_us(),
                        acquired: a,
                        dets,
                    });
                }
                Ok(())
            })();
            q2.close();
            result
        });
        let tracker = s.spawn(|| -> Result<(), PipelineError> {
            let result = (|| {
                while let Some(d) = q2.pop() {
                    let f = d.acquired.frame;
                    let snaps = track.run(f, &d.dets)?;
                    let t_track_done = clock.now_us();
                    analyze.run(f, &snaps, &d.acquired.boxes, &d.dets)?;
                    q3.push(Tracked {
                        trace: LatencyTrace {
                            frame_seq: 0,
                            t_acquire: d.acquired.t_acquire,
                            t_detect_done: d.t_detect_done,
                            t_track_done,
                            t_analyze_done: clock.now_us(),
                            ..Default::default()
                        },
                        snaps,
                    });
                }
                Ok(())
            })();
            q3.close();
            result
        });
        let sender = s.spawn(|| {
            let mut traces = Vec::new();
            while let Some(t) = q3.pop() {
                traces.push(broadcast.run(&t.snaps, t.trace, clock.as_ref()));
            }
            traces
        });
        (
            acquire.join().expect("acquire worker"),
            detector.join().expect("detect worker"),
            tracker.join().expect("track worker"),
            sender.join().expect("broadcast worker"),
        )
    });
    acq?;
    det?;
    trk?;
    write_routes_file(out, gen)?;
    let overwrites = q1.overwritten() + q2.overwritten() + q3.overwritten();
    finish(detect, track, analyze, broadcast, &traces, overwrites, out)
}

/// `generate` stage alone: config, ground truth and routes.
pub fn stage_generate(cfg: &RunConfig, out: &Path) -> Result<u64, PipelineError> {
    let mut gen = SceneGenerator::new(&cfg.scene_config()).map_err(|e| PipelineError::new(Stage::Generate, e))?;
    let mut w = write_truth_header(out)?;
    let mut n = 0;
    for truth in gen.by_ref() {
        write_truth_frame(&mut w, &truth).map_err(io(Stage::Generate))?;
        n += 1;
    }
    w.flush().map_err(io(Stage::Generate))?;
    write_routes_file(out, gen)?;
    Ok(n)
}

pub(crate) fn load_truth(cfg: &RunConfig, dir: &Path, stage: Stage) -> Result<Vec<FrameTruth>, PipelineError> {
    let scene = cfg.scene_config();
    read_truth_log(open(dir, TRUTH_LOG, stage)?, scene.frame_count(), scene.frame_period_us())
        .map_err(|e| PipelineError::new(stage, e))
}

pub(crate) fn load_detections(cfg: &RunConfig, dir: &Path, stage: Stage) -> Result<Vec<Vec<Detection>>, PipelineError> {
    let dets = read_detection_log(open(dir, DETECTION_LOG, stage)?).map_err(|e| PipelineError::new(stage, e))?;
    let mut frames = vec![Vec::new(); cfg.scene_config().frame_count() as usize];
    for d in dets {
        let slot = frames
            .get_mut(d.frame_index as usize)
            .ok_or_else(|| PipelineError::msg(stage, format!("detection frame {} beyond the run", d.frame_index)))?;
        slot.push(d);
    }
    Ok(frames)
}

pub(crate) fn load_tracks(cfg: &RunConfig, dir: &Path, stage: Stage) -> Result<Vec<Vec<TrackRecord>>, PipelineError> {
    let recs = read_track_log(open(dir, TRACK_LOG, stage)?).map_err(|e| PipelineError::new(stage, e))?;
    let mut frames = vec![Vec::new(); cfg.scene_config().frame_count() as usize];
    for r in recs {
        let slot = frames
            .get_mut(r.frame_index as usize)
            .ok_or_else(|| PipelineError::msg(stage, format!("track frame {} beyond the run", r.frame_index)))?;
        slot.push(r);
    }
    Ok(frames)
}

/// `detect` stage alone, from the ground-truth log.
pub fn stage_detect(cfg: &RunConfig, dir: &Path) -> Result<u64, PipelineError> {
    let camera = cfg.camera.build()?;
    let truth = load_truth(cfg, dir, Stage::Detect)?;
    let mut detect = DetectStage::new(cfg, &camera, dir)?;
    let mut n = 0;
    for f in &truth {
        let boxes = visible_boxes(f, &camera.world_to_crop, crop_dims(&camera)).map_err(|e| PipelineError::new(Stage::Detect, e))?;
        n += detect.run(f.frame_index, &boxes)?.0.len() as u64;
    }
    detect.log.flush().map_err(io(Stage::Detect))?;
    Ok(n)
}

/// `track` stage alone, from the detection log. Frames without detections
/// still advance the tracker.
pub fn stage_track(cfg: &RunConfig, dir: &Path) -> Result<u64, PipelineError> {
    let camera = cfg.camera.build()?;
    let frames = load_detections(cfg, dir, Stage::Track)?;
    let mut track = TrackStage::new(cfg, &camera, dir)?;
    let mut n = 0;
    for (f, dets) in frames.iter().enumerate() {
        n += track.run(f as u64, dets)?.len() as u64;
    }
    track.log.flush().map_err(io(Stage::Track))?;
    Ok(n)
}

/// `analyze` stage alone: raw distancing flags from the track log.
pub fn stage_analyze(cfg: &RunConfig, dir: &Path) -> Result<u64, PipelineError> {
    let frames = load_tracks(cfg, dir, Stage::Analyze)?;
    let mut w = create(dir, FLAGS_LOG, Stage::Analyze)?;
    writeln!(w, "{FLAGS_HEADER}").map_err(io(Stage::Analyze))?;
    let mut n = 0;
    for (f, recs) in frames.iter().enumerate() {
        let positions = PositionFrame {
            frame_index: f as u64,
            positions: recs
                .iter()
                .filter(|r| r.class == ObjectClass::Pedestrian)
                .map(|r| (r.track_id, r.world))
                .collect(),
        };
        let flags = pairwise_violations(std::slice::from_ref(&positions), cfg.distancing.threshold_m);
        n += flags.len() as u64;
        write_flags(&mut w, &flags).map_err(io(Stage::Analyze))?;
    }
    w.flush().map_err(io(Stage::Analyze))?;
    Ok(n)
}

/// `broadcast` stage alone: replays the track log to the configured sink.
/// The log carries no velocities, so they are differenced from consecutive
/// world positions of each track. With `pace`, frames go out at the frame
/// rate.
pub fn stage_broadcast(cfg: &RunConfig, dir: &Path, pace: bool) -> Result<RunStats, PipelineError> {
    let frames = load_tracks(cfg, dir, Stage::Broadcast)?;
    let sink = make_sink(cfg, dir)?.unwrap_or_else(|| Box::new(NullSink));
    let mut b = Broadcaster::new(cfg.radar.broadcast, sink);
    let clock = PipelineClock::new();
    let period = Duration::from_micros(cfg.scene_config().frame_period_us());
    let fps = cfg.scene.frame_rate;
    let mut last: HashMap<u64, (u64, crate::types::WorldPoint)> = HashMap::new();
    let start = Instant::now();
    for (f, recs) in frames.iter().enumerate() {
        if pace {
            if let Some(wait) = (start + period * f as u32).checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
        let objects: Vec<RadarObject> = recs
            .iter()
            .map(|r| {
                let (vx, vy) = match last.get(&r.track_id) {
                    Some(&(g, p)) if (g as usize) < f => {
                        let dt = (f as u64 - g) as f64 / fps;
                        ((r.world.x - p.x) / dt, (r.world.y - p.y) / dt)
                    }
                    _ => (0.0, 0.0),
                };
                last.insert(r.track_id, (f as u64, r.world));
                RadarObject {
                    track_id: r.track_id as u32,
                    class: r.class.into(),
                    x_mm: to_mm(r.world.x),
                    y_mm: to_mm(r.world.y),
                    vx_mm_s: to_mm(vx),
                    vy_mm_s: to_mm(vy),
                }
            })
            .collect();
        let ts = f as u64 * cfg.scene_config().frame_period_us();
        b.broadcast_frame(&objects, ts, LatencyTrace::default(), &clock);
    }
    b.flush().map_err(io(Stage::Broadcast))?;
    Ok(RunStats {
        frames: frames.len() as u64,
        datagrams_sent: b.sent(),
        datagrams_dropped: b.dropped().len() as u64,
        ..Default::default()
    })
}
