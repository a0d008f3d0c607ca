use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::config::{SceneConfig, ScriptedObject};
use super::path::{CurveSpan, Path};
use super::turns::{Arm, Movement};
use super::{SceneError, MAX_SPEED_MPS};
use crate::types::{ObjectClass, WorldPoint};

/// True state of one traffic participant at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthObject {
    pub id: u64,
    pub class: ObjectClass,
    pub pos: WorldPoint,
    /// m/s
    pub vel: (f64, f64),
    /// (length along heading, width), meters
    pub footprint: (f64, f64),
    pub group_id: Option<u64>,
}

impl GroundTruthObject {
    pub fn speed(&self) -> f64 {
        self.vel.0.hypot(self.vel.1)
    }

    /// Heading from the velocity; stationary objects face east.
    pub fn heading(&self) -> f64 {
        if self.speed() > 1e-9 {
            self.vel.1.atan2(self.vel.0)
        } else {
            0.0
        }
    }

    /// World-space footprint corners.
    pub fn corners(&self) -> [WorldPoint; 4] {
        let (c, s) = (self.heading().cos(), self.heading().sin());
        let (hl, hw) = (self.footprint.0 / 2.0, self.footprint.1 / 2.0);
        [(hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)].map(|(a, b)| {
            WorldPoint::new(self.pos.x + a * c - b * s, self.pos.y + a * s + b * c)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameTruth {
    pub frame_index: u64,
    pub timestamp_us: u64,
    pub objects: Vec<GroundTruthObject>,
}

/// Where an object came from and where it left, if it did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteRecord {
    pub class: ObjectClass,
    pub entry: Arm,
    pub planned_exit: Arm,
    pub spawn_frame: u64,
    /// Frame at which the object left the scene; `None` while still inside.
    pub exit_frame: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub config: SceneConfig,
    pub frames: Vec<FrameTruth>,
    pub routes: BTreeMap<u64, RouteRecord>,
}

/// Kinematic limits per class: (tangential accel, lateral accel), m/s^2.
fn accel_limits(class: ObjectClass) -> (f64, f64) {
    match class {
        ObjectClass::Pedestrian => (0.4, 1.0),
        ObjectClass::Vehicle | ObjectClass::Bicycle => (1.5, 2.5),
    }
}

const PEDESTRIAN_FILLET_M: f64 = 2.0;

#[derive(Debug, Clone)]
struct Member {
    id: u64,
    /// Distance behind the lead position along the path.
    lag: f64,
    done: bool,
}

#[derive(Debug, Clone)]
struct Mover {
    class: ObjectClass,
    path: Path,
    curves: Vec<CurveSpan>,
    s: f64,
    v: f64,
    cruise: f64,
    accel: f64,
    lateral: f64,
    footprint: (f64, f64),
    group_id: Option<u64>,
    members: Vec<Member>,
}

impl Mover {
    fn speed_limit_at(&self, s: f64) -> f64 {
        let brake = 0.8 * self.accel;
        let mut limit = self.cruise;
        for c in &self.curves {
            let v_curve = (self.lateral * c.radius).sqrt();
            if s >= c.start && s <= c.end {
                limit = limit.min(v_curve);
            } else if s < c.start {
                limit = limit.min((v_curve * v_curve + 2.0 * brake * (c.start - s)).sqrt());
            }
        }
        limit
    }

    fn step(&mut self, dt: f64) {
        let target = self
            .members
            .iter()
            .filter(|m| !m.done)
            .map(|m| self.speed_limit_at(self.s - m.lag))
            .fold(self.cruise, f64::min);
        let dv = self.accel * dt;
        let v_new = target.clamp((self.v - dv).max(0.0), self.v + dv);
        self.s += 0.5 * (self.v + v_new) * dt;
        self.v = v_new;
    }

    fn object(&self, m: &Member) -> GroundTruthObject {
        let pose = self.path.pose(self.s - m.lag);
        GroundTruthObject {
            id: m.id,
            class: self.class,
            pos: pose.position,
            vel: (pose.heading.0 * self.v, pose.heading.1 * self.v),
            footprint: self.footprint,
            group_id: self.group_id,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct LaneState {
    spawn_time: f64,
    speed: f64,
}

/// Streams frames of a seeded synthetic intersection.
pub struct SceneGenerator {
    config: SceneConfig,
    rng: ChaCha8Rng,
    frame: u64,
    frame_count: u64,
    movers: Vec<Mover>,
    next_arrival: Vec<(Arm, ObjectClass, f64)>,
    lanes: BTreeMap<(Arm, ObjectClass, i8), LaneState>,
    scripted: Vec<ScriptedObject>,
    next_id: u64,
    next_group: u64,
    routes: BTreeMap<u64, RouteRecord>,
}

impl SceneGenerator {
    pub fn new(config: &SceneConfig) -> Result<Self, SceneError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut next_arrival = Vec::new();
        for arm in Arm::ALL {
            for class in [ObjectClass::Vehicle, ObjectClass::Pedestrian, ObjectClass::Bicycle] {
                let rate = config.spawn_per_min.get(class) / 60.0;
                let first = if rate > 0.0 {
                    Exp::new(rate).expect("positive rate").sample(&mut rng)
                } else {
                    f64::INFINITY
                };
                next_arrival.push((arm, class, first));
            }
        }
        let mut scripted = config.scripted.clone();
        scripted.sort_by(|a, b| a.spawn_time_s.total_cmp(&b.spawn_time_s));
        scripted.reverse();
        Ok(Self {
            config: config.clone(),
            rng,
            frame: 0,
            frame_count: config.frame_count(),
            movers: Vec::new(),
            next_arrival,
            lanes: BTreeMap::new(),
            scripted,
            next_id: 1,
            next_group: 1,
            routes: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &SceneConfig {
        &self.config
    }

    pub fn routes(&self) -> &BTreeMap<u64, RouteRecord> {
        &self.routes
    }

    pub fn into_routes(self) -> BTreeMap<u64, RouteRecord> {
        self.routes
    }

    fn spawn_distance(&self) -> f64 {
        self.config.world_half_extent_m + 4.0
    }

    fn vehicle_path(&self, class: ObjectClass, entry: Arm, movement: Movement) -> Path {
        let d = self.spawn_distance();
        let w = self.config.road_half_width_m;
        let lane = if class == ObjectClass::Bicycle {
            self.config.bike_lane_offset_m
        } else {
            self.config.lane_offset_m
        };
        let wp = WorldPoint::new;
        let (pts, fillet) = match movement {
            Movement::Straight => (vec![wp(-lane, d), wp(-lane, -d)], 0.0),
            Movement::Left => (vec![wp(-lane, d), wp(-lane, -lane), wp(d, -lane)], 2.0 * lane),
            Movement::Right => (vec![wp(-lane, d), wp(-lane, lane), wp(-d, lane)], w - lane),
            Movement::UTurn => (vec![wp(-lane, d), wp(-lane, lane), wp(lane, lane), wp(lane, d)], lane),
        };
        let rotated: Vec<_> = pts.into_iter().map(|p| entry.rotate(p)).collect();
        Path::filleted(&rotated, fillet)
    }

    /// Sidewalk/crosswalk route. Returns the path and the exit arm.
    fn pedestrian_path(&mut self, entry: Arm, side: i8, offset: f64) -> (Path, Arm) {
        let d = self.spawn_distance();
        let p = self.config.sidewalk_offset_m + offset;
        // corners counter-clockwise in the north-arm frame
        let corners = [
            WorldPoint::new(p, p),
            WorldPoint::new(-p, p),
            WorldPoint::new(-p, -p),
            WorldPoint::new(p, -p),
        ];
        // outward sidewalk legs per corner, tagged with the (north-frame) arm
        let legs: [[(WorldPoint, usize); 2]; 4] = [
            [(WorldPoint::new(p, d), 0), (WorldPoint::new(d, p), 1)],
            [(WorldPoint::new(-p, d), 0), (WorldPoint::new(-d, p), 3)],
            [(WorldPoint::new(-d, -p), 3), (WorldPoint::new(-p, -d), 2)],
            [(WorldPoint::new(p, -d), 2), (WorldPoint::new(d, -p), 1)],
        ];
        let start_corner = if side > 0 { 0 } else { 1 };
        let mut pts = vec![legs[start_corner][0].0, corners[start_corner]];
        let crossings = match self.rng.random_range(0.0..1.0) {
            x if x < 0.3 => 0,
            x if x < 0.8 => 1,
            _ => 2,
        };
        let dir: i64 = if self.rng.random_bool(0.5) { 1 } else { -1 };
        let mut corner = start_corner as i64;
        for _ in 0..crossings {
            corner = (corner + dir).rem_euclid(4);
            pts.push(corners[corner as usize]);
        }
        let corner = corner as usize;
        let leg = if crossings == 0 {
            // keep walking around the block onto the cross street
            legs[corner].iter().find(|l| l.1 != 0).copied().expect("corner touches two arms")
        } else {
            legs[corner][self.rng.random_range(0..2)]
        };
        pts.push(leg.0);
        let rotated: Vec<_> = pts.into_iter().map(|q| entry.rotate(q)).collect();
        let exit = Arm::from_index(entry.index() + leg.1);
        (Path::filleted(&rotated, PEDESTRIAN_FILLET_M), exit)
    }

    fn gate_speed(&self, key: (Arm, ObjectClass, i8), now: f64, speed: f64, shared: f64, gap: f64) -> Option<f64> {
        let Some(prev) = self.lanes.get(&key) else {
            return Some(speed);
        };
        if now - prev.spawn_time < gap {
            return None;
        }
        // arrival at the end of the shared stretch must trail the leader by `gap`
        let leader_end = prev.spawn_time + shared / prev.speed;
        let follower_end = now + shared / speed;
        if follower_end - leader_end >= gap {
            return Some(speed);
        }
        let slack = leader_end + gap - now;
        Some(shared / slack)
    }

    fn add_mover(&mut self, mover: Mover, entry: Arm, exit: Arm) {
        for m in &mover.members {
            self.routes.insert(
                m.id,
                RouteRecord {
                    class: mover.class,
                    entry,
                    planned_exit: exit,
                    spawn_frame: self.frame,
                    exit_frame: None,
                },
            );
        }
        self.movers.push(mover);
    }

    fn single_member(&mut self) -> Vec<Member> {
        let id = self.next_id;
        self.next_id += 1;
        vec![Member {
            id,
            lag: 0.0,
            done: false,
        }]
    }

    fn make_vehicle_like(&mut self, class: ObjectClass, entry: Arm, movement: Movement, cruise: f64, footprint: (f64, f64)) {
        let path = self.vehicle_path(class, entry, movement);
        let (accel, lateral) = accel_limits(class);
        let members = self.single_member();
        let mut mover = Mover {
            class,
            curves: path.curves(),
            path,
            s: 0.0,
            v: 0.0,
            cruise,
            accel,
            lateral,
            footprint,
            group_id: None,
            members,
        };
        mover.v = mover.speed_limit_at(0.0);
        self.add_mover(mover, entry, movement.exit_for(entry));
    }

    fn spawn_scripted(&mut self, s: ScriptedObject) {
        match s.class {
            ObjectClass::Pedestrian => {
                let (path, exit) = self.pedestrian_path(s.entry, 1, 0.0);
                let members = self.single_member();
                let (accel, lateral) = accel_limits(s.class);
                let mut mover = Mover {
                    class: s.class,
                    curves: path.curves(),
                    path,
                    s: 0.0,
                    v: 0.0,
                    cruise: s.speed_mps,
                    accel,
                    lateral,
                    footprint: (0.5, 0.5),
                    group_id: None,
                    members,
                };
                mover.v = mover.speed_limit_at(0.0);
                self.add_mover(mover, s.entry, exit);
            }
            ObjectClass::Vehicle => self.make_vehicle_like(s.class, s.entry, s.movement, s.speed_mps, (4.5, 1.8)),
            ObjectClass::Bicycle => self.make_vehicle_like(s.class, s.entry, s.movement, s.speed_mps, (1.7, 0.6)),
        }
    }

    fn spawn_random(&mut self, arm: Arm, class: ObjectClass, now: f64) {
        match class {
            ObjectClass::Vehicle | ObjectClass::Bicycle => {
                let movement = match self.rng.random_range(0.0..1.0) {
                    x if x < 0.5 => Movement::Straight,
                    x if x < 0.72 => Movement::Left,
                    x if x < 0.95 => Movement::Right,
                    _ => Movement::UTurn,
                };
                let cruise = if class == ObjectClass::Vehicle {
                    match movement {
                        Movement::Straight => self.rng.random_range(5.0..11.0),
                        _ => self.rng.random_range(4.0..7.0),
                    }
                } else {
                    self.rng.random_range(3.5..6.0)
                };
                let footprint = if class == ObjectClass::Vehicle {
                    (self.rng.random_range(4.2..5.0), self.rng.random_range(1.7..1.9))
                } else {
                    (1.7, 0.6)
                };
                let shared = self.spawn_distance() - self.config.road_half_width_m;
                let gap = if class == ObjectClass::Vehicle { 2.0 } else { 1.5 };
                let key = (arm, class, 0);
                // turning traffic decelerates; gate on a conservative mean speed
                let path = self.vehicle_path(class, arm, movement);
                let (_, lateral) = accel_limits(class);
                let slowest = path
                    .curves()
                    .iter()
                    .map(|c| (lateral * c.radius).sqrt())
                    .fold(cruise, f64::min);
                let effective = 0.5 * (cruise + slowest);
                let Some(gated) = self.gate_speed(key, now, effective, shared, gap) else {
                    return;
                };
                let cruise = if gated < effective { cruise * gated / effective } else { cruise };
                if cruise < 2.0 {
                    return;
                }
                self.lanes.insert(
                    key,
                    LaneState {
                        spawn_time: now,
                        speed: gated.min(effective),
                    },
                );
                self.make_vehicle_like(class, arm, movement, cruise.min(MAX_SPEED_MPS), footprint);
            }
            ObjectClass::Pedestrian => {
                let side: i8 = if self.rng.random_bool(0.5) { 1 } else { -1 };
                let is_group = self.rng.random_bool(self.config.group_fraction);
                let size = if !is_group {
                    1
                } else if self.rng.random_bool(0.7) {
                    2
                } else {
                    3
                };
                let offset = if is_group {
                    self.rng.random_range(-0.4..0.4)
                } else {
                    self.rng.random_range(-0.8..0.8)
                };
                let cruise = if is_group {
                    self.rng.random_range(1.0..1.4)
                } else {
                    self.rng.random_range(1.0..1.6)
                };
                let (path, exit) = self.pedestrian_path(arm, side, offset);
                let key = (arm, class, side);
                let shared = self.spawn_distance() - self.config.sidewalk_offset_m;
                let Some(gated) = self.gate_speed(key, now, cruise, shared, 3.0) else {
                    return;
                };
                if gated < 0.9 {
                    return;
                }
                let cruise = gated.min(cruise);
                let spacing = if size == 3 { 0.58 } else { 0.75 };
                let (accel, lateral) = accel_limits(class);
                let mut mover = Mover {
                    class,
                    curves: path.curves(),
                    path,
                    s: 0.0,
                    v: 0.0,
                    cruise,
                    accel,
                    lateral,
                    footprint: (0.5, 0.5),
                    group_id: None,
                    members: (0..size)
                        .map(|k| Member {
                            id: 0,
                            lag: k as f64 * spacing,
                            done: false,
                        })
                        .collect(),
                };
                mover.v = mover
                    .members
                    .iter()
                    .map(|m| mover.speed_limit_at(-m.lag))
                    .fold(cruise, f64::min);
                if self.crowds(&mover) {
                    return;
                }
                for m in &mut mover.members {
                    m.id = self.next_id;
                    self.next_id += 1;
                }
                if is_group {
                    mover.group_id = Some(self.next_group);
                    self.next_group += 1;
                }
                self.lanes.insert(
                    key,
                    LaneState {
                        // the tail member passes the spawn point later
                        spawn_time: now + (size - 1) as f64 * spacing / cruise,
                        speed: cruise,
                    },
                );
                self.add_mover(mover, arm, exit);
            }
        }
    }

    /// Whether a new pedestrian party would walk into, or shadow, another
    /// party: strangers keep out of each other's way, so a spawn that would
    /// come within a body width of anyone, or stay within 2 m of someone
    /// heading the same way for more than a moment, is dropped.
    fn crowds(&self, candidate: &Mover) -> bool {
        const TOUCH_M: f64 = 0.6;
        const NEAR_M: f64 = 2.0;
        const SHADOW_FRAMES: u32 = 20;
        let dt = 1.0 / self.config.frame_rate;
        let mut others: Vec<Mover> = self
            .movers
            .iter()
            .filter(|m| m.class == ObjectClass::Pedestrian)
            .cloned()
            .collect();
        if others.is_empty() {
            return false;
        }
        let mut cand = candidate.clone();
        let len = cand.path.length();
        let tail = cand.members.iter().map(|m| m.lag).fold(0.0, f64::max);
        let mut shadow: HashMap<(usize, usize, usize), u32> = HashMap::new();
        let max_steps = ((len + tail) / (0.5 * cand.cruise) / dt) as usize + 1;
        for _ in 0..max_steps {
            if cand.s - tail > len {
                break;
            }
            for (ci, cm) in cand.members.iter().enumerate() {
                let cs = cand.s - cm.lag;
                if cs < 0.0 || cs > len {
                    continue;
                }
                let a = cand.object(cm);
                for (oi, o) in others.iter().enumerate() {
                    let olen = o.path.length();
                    for (mi, om) in o.members.iter().enumerate() {
                        let os = o.s - om.lag;
                        if os < 0.0 || os > olen {
                            continue;
                        }
                        let b = o.object(om);
                        let d = a.pos.distance(&b.pos);
                        if d < TOUCH_M {
                            return true;
                        }
                        let key = (ci, oi, mi);
                        let dot = a.vel.0 * b.vel.0 + a.vel.1 * b.vel.1;
                        if d < NEAR_M && dot > 0.0 {
                            let n = shadow.entry(key).or_insert(0);
                            *n += 1;
                            if *n > SHADOW_FRAMES {
                                return true;
                            }
                        } else {
                            shadow.remove(&key);
                        }
                    }
                }
            }
            cand.step(dt);
            for o in &mut others {
                o.step(dt);
            }
        }
        false
    }

    fn spawn_due(&mut self, now: f64) {
        while self.scripted.last().is_some_and(|s| s.spawn_time_s <= now + 1e-9) {
            let s = self.scripted.pop().expect("checked");
            self.spawn_scripted(s);
        }
        for i in 0..self.next_arrival.len() {
            let (arm, class, _) = self.next_arrival[i];
            while self.next_arrival[i].2 <= now {
                self.spawn_random(arm, class, now);
                let rate = self.config.spawn_per_min.get(class) / 60.0;
                let gap = Exp::new(rate).expect("positive rate").sample(&mut self.rng);
                self.next_arrival[i].2 += gap;
            }
        }
    }

    fn snapshot(&self) -> Vec<GroundTruthObject> {
        let mut objects: Vec<_> = self
            .movers
            .iter()
            .flat_map(|mv| mv.members.iter().filter(|m| !m.done).map(move |m| mv.object(m)))
            .collect();
        objects.sort_by_key(|o| o.id);
        objects
    }
}

impl Iterator for SceneGenerator {
    type Item = FrameTruth;

    fn next(&mut self) -> Option<FrameTruth> {
        if self.frame >= self.frame_count {
            return None;
        }
        let dt = 1.0 / self.config.frame_rate;
        let now = self.frame as f64 * dt;
        if self.frame > 0 {
            for mv in &mut self.movers {
                mv.step(dt);
            }
            let frame = self.frame;
            for mv in &mut self.movers {
                let len = mv.path.length();
                for m in mv.members.iter_mut().filter(|m| !m.done) {
                    if mv.s - m.lag > len {
                        m.done = true;
                        if let Some(r) = self.routes.get_mut(&m.id) {
                            r.exit_frame = Some(frame);
                        }
                    }
                }
            }
            self.movers.retain(|mv| mv.members.iter().any(|m| !m.done));
        }
        self.spawn_due(now);
        let out = FrameTruth {
            frame_index: self.frame,
            timestamp_us: self.frame * self.config.frame_period_us(),
            objects: self.snapshot(),
        };
        self.frame += 1;
        Some(out)
    }
}

pub fn generate(config: &SceneConfig) -> Result<Scene, SceneError> {
    let mut gen = SceneGenerator::new(config)?;
    let frames: Vec<FrameTruth> = gen.by_ref().collect();
    Ok(Scene {
        config: config.clone(),
        frames,
        routes: gen.into_routes(),
    })
}
