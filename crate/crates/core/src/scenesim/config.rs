use serde::{Deserialize, Serialize};

use super::turns::{Arm, Movement, Polygon};
use super::SceneError;
use crate::types::{ObjectClass, WorldPoint};

/// Arrivals per minute per approach arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpawnRates {
    pub vehicle: f64,
    pub pedestrian: f64,
    pub bicycle: f64,
}

impl Default for SpawnRates {
    fn default() -> Self {
        Self {
            vehicle: 4.0,
            pedestrian: 3.0,
            bicycle: 0.5,
        }
    }
}

impl SpawnRates {
    pub fn zero() -> Self {
        Self {
            vehicle: 0.0,
            pedestrian: 0.0,
            bicycle: 0.0,
        }
    }

    pub fn get(&self, class: ObjectClass) -> f64 {
        match class {
            ObjectClass::Vehicle => self.vehicle,
            ObjectClass::Pedestrian => self.pedestrian,
            ObjectClass::Bicycle => self.bicycle,
        }
    }
}

/// The four approach polygons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmPolygons {
    pub north: Polygon,
    pub east: Polygon,
    pub south: Polygon,
    pub west: Polygon,
}

impl ArmPolygons {
    /// Road-only arms outside the central box `[-half_width, half_width]^2`.
    pub fn standard(road_half_width: f64, extent: f64) -> Self {
        let (w, e) = (road_half_width, extent);
        Self {
            north: Polygon::rect(-w, w, w, e),
            east: Polygon::rect(w, -w, e, w),
            south: Polygon::rect(-w, -e, w, -w),
            west: Polygon::rect(-e, -w, -w, w),
        }
    }

    pub fn get(&self, arm: Arm) -> &Polygon {
        match arm {
            Arm::North => &self.north,
            Arm::East => &self.east,
            Arm::South => &self.south,
            Arm::West => &self.west,
        }
    }

    /// First arm whose polygon contains `p`.
    pub fn locate(&self, p: WorldPoint) -> Option<Arm> {
        Arm::ALL.into_iter().find(|&a| self.get(a).contains(p))
    }
}

/// A single hand-placed traveller, used for controlled experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedObject {
    pub class: ObjectClass,
    pub entry: Arm,
    pub movement: Movement,
    pub speed_mps: f64,
    #[serde(default)]
    pub spawn_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub frame_rate: f64,
    pub duration_s: f64,
    pub seed: u64,
    /// Half side of the square world patch, meters (40 m x 40 m by default).
    pub world_half_extent_m: f64,
    pub road_half_width_m: f64,
    /// Offset of the vehicle lane center from the road centerline.
    pub lane_offset_m: f64,
    pub bike_lane_offset_m: f64,
    /// Sidewalk / crosswalk line distance from the centerline.
    pub sidewalk_offset_m: f64,
    pub spawn_per_min: SpawnRates,
    /// Fraction of pedestrian arrivals that are groups walking together.
    pub group_fraction: f64,
    pub arms: Option<ArmPolygons>,
    pub scripted: Vec<ScriptedObject>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            frame_rate: 30.0,
            duration_s: 600.0,
            seed: 7,
            world_half_extent_m: 20.0,
            road_half_width_m: 8.0,
            lane_offset_m: 4.0,
            bike_lane_offset_m: 6.5,
            sidewalk_offset_m: 10.0,
            spawn_per_min: SpawnRates::default(),
            group_fraction: 0.4,
            arms: None,
            scripted: Vec::new(),
        }
    }
}

impl SceneConfig {
    pub fn empty(duration_s: f64) -> Self {
        Self {
            duration_s,
            spawn_per_min: SpawnRates::zero(),
            ..Self::default()
        }
    }

    pub fn frame_count(&self) -> u64 {
        (self.duration_s * self.frame_rate).round().max(0.0) as u64
    }

    /// Frame period in whole microseconds.
    pub fn frame_period_us(&self) -> u64 {
        (1e6 / self.frame_rate).round() as u64
    }

    pub fn arm_polygons(&self) -> ArmPolygons {
        self.arms.clone().unwrap_or_else(|| {
            ArmPolygons::standard(self.road_half_width_m, self.world_half_extent_m + 2.0)
        })
    }

    /// Roads, sidewalks and the central box; the building corners are
    /// outside the region of interest.
    pub fn roi_contains(&self, p: WorldPoint) -> bool {
        let band = self.sidewalk_offset_m + 2.0;
        p.x.abs() <= band || p.y.abs() <= band
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |msg: &str| Err(SceneError::InvalidConfig(msg.to_string()));
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return bad("frame_rate must be positive");
        }
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return bad("duration_s must be non-negative");
        }
        for c in ObjectClass::ALL {
            let r = self.spawn_per_min.get(c);
            if !(r >= 0.0 && r.is_finite()) {
                return bad("spawn rates must be non-negative");
            }
        }
        if !(0.0..=1.0).contains(&self.group_fraction) {
            return bad("group_fraction must lie in [0, 1]");
        }
        if !(self.world_half_extent_m > self.sidewalk_offset_m
            && self.sidewalk_offset_m > self.road_half_width_m
            && self.road_half_width_m > self.bike_lane_offset_m
            && self.bike_lane_offset_m > self.lane_offset_m
            && self.lane_offset_m > 0.0)
        {
            return bad("expected 0 < lane < bike lane < road half width < sidewalk < extent");
        }
        let arms = self.arm_polygons();
        for (i, a) in Arm::ALL.iter().enumerate() {
            if arms.get(*a).0.len() < 3 {
                return bad("arm polygons need at least three vertices");
            }
            for b in &Arm::ALL[i + 1..] {
                if arms.get(*a).overlaps(arms.get(*b)) {
                    return Err(SceneError::InvalidConfig(format!("arms {a} and {b} overlap")));
                }
            }
        }
        for s in &self.scripted {
            if !(s.speed_mps > 0.0 && s.speed_mps <= super::MAX_SPEED_MPS) {
                return bad("scripted speed must lie in (0, 27.78] m/s");
            }
            if s.class == ObjectClass::Pedestrian && s.speed_mps > super::MAX_PEDESTRIAN_SPEED_MPS {
                return bad("pedestrian speed above 3 m/s");
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SceneError> {
        let cfg: SceneConfig = toml::from_str(text).map_err(|e| SceneError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SceneConfig::default().validate().unwrap();
        assert_eq!(SceneConfig::default().frame_period_us(), 33333);
        assert_eq!(SceneConfig::default().frame_count(), 18000);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = SceneConfig {
            frame_rate: 0.0,
            ..SceneConfig::default()
        };
        assert!(c.validate().is_err());
        c.frame_rate = 30.0;
        c.spawn_per_min.vehicle = -1.0;
        assert!(c.validate().is_err());
        c.spawn_per_min.vehicle = 1.0;
        let mut arms = ArmPolygons::standard(8.0, 22.0);
        arms.east = Polygon::rect(0.0, 0.0, 22.0, 10.0);
        c.arms = Some(arms);
        assert!(matches!(c.validate(), Err(SceneError::InvalidConfig(m)) if m.contains("overlap")));
    }

    #[test]
    fn toml_partial_override() {
        let cfg = SceneConfig::from_toml_str(
            "duration_s = 10.0\nseed = 99\n[spawn_per_min]\nvehicle = 0.0\npedestrian = 0.0\nbicycle = 0.0\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.frame_rate, 30.0);
        assert_eq!(cfg.spawn_per_min, SpawnRates::zero());
    }

    #[test]
    fn standard_arms_locate() {
        let arms = ArmPolygons::standard(8.0, 22.0);
        assert_eq!(arms.locate(WorldPoint::new(-4.0, 15.0)), Some(Arm::North));
        assert_eq!(arms.locate(WorldPoint::new(15.0, -4.0)), Some(Arm::East));
        assert_eq!(arms.locate(WorldPoint::new(0.0, 0.0)), None);
    }
}
