use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{PipelineError, Stage};
use crate::analytics::{DistancingConfig, StitchParams};
use crate::anonymize::{RecallParams, RegionSpec, DEFAULT_KERNEL};
use crate::detemu::{LatencyModel, NoiseProfile};
use crate::geometry::{CameraModel, CropSpec, Homography, SceneMask};
use crate::radar::{BroadcastConfig, DEFAULT_BUDGET_US, DEFAULT_MULTICAST};
use crate::scenesim::SceneConfig;
use crate::tracker::TrackerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    /// Single thread, emulated detector latency on a simulated clock.
    #[default]
    Virtual,
    /// One thread per stage, paced at the frame rate.
    Realtime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SinkKind {
    None,
    Udp,
    #[default]
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub native_width: u32,
    pub native_height: u32,
    pub pixels_per_meter: f64,
    /// Native pixel of the intersection center.
    pub center_px: (f64, f64),
    pub crop: CropSpec,
    /// Optional PGM scene mask over the crop.
    pub mask: Option<PathBuf>,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            native_width: 1920,
            native_height: 1080,
            pixels_per_meter: 20.0,
            center_px: (960.0, 540.0),
            crop: CropSpec::default(),
            mask: None,
        }
    }
}

impl CameraConfig {
    pub fn build(&self) -> Result<CameraModel, PipelineError> {
        let h = Homography::birdseye(self.pixels_per_meter, self.center_px.0, self.center_px.1)
            .map_err(|e| PipelineError::new(Stage::Config, e))?;
        CameraModel::new(self.native_width, self.native_height, self.crop, h).map_err(|e| PipelineError::new(Stage::Config, e))
    }

    pub fn load_mask(&self) -> Result<Option<Arc<SceneMask>>, PipelineError> {
        let Some(path) = &self.mask else {
            return Ok(None);
        };
        let f = File::open(path).map_err(|e| PipelineError::new(Stage::Config, e).context(path.display()))?;
        let m = SceneMask::read_pgm(BufReader::new(f)).map_err(|e| PipelineError::new(Stage::Config, e))?;
        if m.width() != self.crop.side as usize || m.height() != self.crop.side as usize {
            return Err(PipelineError::msg(Stage::Config, "mask size must equal the crop side"));
        }
        Ok(Some(Arc::new(m)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnonymizeConfig {
    pub enabled: bool,
    pub kernel: usize,
    pub regions: RegionSpec,
    pub recall: RecallParams,
    /// Write every n-th blurred frame as PGM; 0 writes none.
    pub sample_every: u64,
}

impl Default for AnonymizeConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            kernel: DEFAULT_KERNEL,
            regions: RegionSpec::default(),
            recall: RecallParams::default(),
            sample_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadarConfig {
    pub sink: SinkKind,
    pub udp_target: String,
    pub broadcast: BroadcastConfig,
    pub budget_us: u64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            sink: SinkKind::File,
            udp_target: DEFAULT_MULTICAST.to_string(),
            broadcast: BroadcastConfig::default(),
            budget_us: DEFAULT_BUDGET_US,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub ap_iou: f64,
    pub mota_iou: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ap_iou: 0.5,
            mota_iou: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Drives the scene and the detector emulator.
    pub seed: u64,
    pub mode: RunMode,
    /// Scene file, relative to the config file; replaces `[scene]`.
    pub scene_file: Option<PathBuf>,
    pub scene: SceneConfig,
    pub camera: CameraConfig,
    pub noise: NoiseProfile,
    pub latency: LatencyModel,
    pub tracker: TrackerConfig,
    pub distancing: DistancingConfig,
    pub turns: StitchParams,
    pub anonymize: AnonymizeConfig,
    pub radar: RadarConfig,
    pub evaluation: EvalConfig,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            mode: RunMode::Virtual,
            scene_file: None,
            scene: SceneConfig::default(),
            camera: CameraConfig::default(),
            noise: NoiseProfile::default(),
            latency: LatencyModel::default(),
            tracker: TrackerConfig::default(),
            distancing: DistancingConfig::default(),
            turns: StitchParams::default(),
            anonymize: AnonymizeConfig::default(),
            radar: RadarConfig::default(),
            evaluation: EvalConfig::default(),
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::new(Stage::Config, e))
    }

    /// Reads a config file, inlines `scene_file` and resolves relative
    /// paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::new(Stage::Config, e).context(path.display()))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(scene) = cfg.scene_file.take() {
            let p = base.join(scene);
            let text = std::fs::read_to_string(&p).map_err(|e| PipelineError::new(Stage::Config, e).context(p.display()))?;
            cfg.scene = SceneConfig::from_toml_str(&text).map_err(|e| PipelineError::new(Stage::Config, e))?;
        }
        if let Some(mask) = &cfg.camera.mask {
            let p = base.join(mask);
            if !p.is_file() {
                return Err(PipelineError::msg(Stage::Config, format!("mask file {} not found", p.display())));
            }
            cfg.camera.mask = Some(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// The scene this run simulates: `[scene]` with the run seed.
    pub fn scene_config(&self) -> SceneConfig {
        SceneConfig {
            seed: self.seed,
            ..self.scene.clone()
        }
    }

    /// Emulator seed, kept apart from the scene stream.
    pub fn detector_seed(&self) -> u64 {
        self.seed ^ 0x5DEE_CE66_D1CE_5EED
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::msg(Stage::Config, m));
        self.scene_config()
            .validate()
            .map_err(|e| PipelineError::new(Stage::Config, e))?;
        self.tracker.validate().map_err(|e| PipelineError::new(Stage::Config, e))?;
        self.latency.validate().map_err(|e| PipelineError::msg(Stage::Config, e))?;
        if self.anonymize.kernel < 3 || self.anonymize.kernel.is_multiple_of(2) {
            return bad(format!("anonymize.kernel must be odd and >= 3, got {}", self.anonymize.kernel));
        }
        if !(0.0..=1.0).contains(&self.anonymize.recall.coverage_min) {
            return bad("anonymize.recall.coverage_min must lie in [0, 1]".into());
        }
        if self.radar.sink == SinkKind::Udp && self.radar.udp_target.parse::<std::net::SocketAddr>().is_err() {
            return bad(format!("radar.udp_target `{}` is not an address", self.radar.udp_target));
        }
        if self.scene.frame_rate <= 0.0 || self.distancing.threshold_m <= 0.0 {
            return bad("frame rate and distancing threshold must be positive".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, PipelineError> {
        toml::to_string(self).map_err(|e| PipelineError::new(Stage::Config, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = RunConfig::from_toml_str("seed = 3\n[scene]\nduration_s = 10.0\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.scene.duration_s, 10.0);
        assert_eq!(c.scene_config().seed, 3);
        assert_eq!(c.tracker, TrackerConfig::default());
    }

    #[test]
    fn rejects_even_kernel() {
        let c = RunConfig::from_toml_str("[anonymize]\nkernel = 4\n").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn missing_scene_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "scene_file = \"nope.toml\"\n").unwrap();
        assert!(RunConfig::load(&p).is_err());
    }
}
