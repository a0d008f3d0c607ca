//! Run configuration, stage orchestration, persisted logs, reports and the
//! acceptance checks.

mod config;
mod logs;
mod queue;
mod report;
mod run;
pub mod verify;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{AnonymizeConfig, CameraConfig, EvalConfig, RadarConfig, RunConfig, RunMode, SinkKind};
pub use logs::*;
pub use queue::{OverwriteQueue, STAGE_QUEUE_DEPTH};
pub use report::{
    report, ReportSummary, AP_CSV, AUDIT_CSV, BUDGET_CSV, EVENTS_CSV, F1_CSV, FLAGS_CSV, HISTOGRAM_CSV, HISTOGRAM_SVG, MOTA_CSV,
    SUMMARY_JSON, TURNS_CSV, TURNS_TRUTH_CSV,
};
pub use run::{execute, stage_analyze, stage_broadcast, stage_detect, stage_generate, stage_track, RunStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Generate,
    Detect,
    Track,
    Analyze,
    Anonymize,
    Broadcast,
    Report,
    Io,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Generate => "generate",
            Stage::Detect => "detect",
            Stage::Track => "track",
            Stage::Analyze => "analyze",
            Stage::Anonymize => "anonymize",
            Stage::Broadcast => "broadcast",
            Stage::Report => "report",
            Stage::Io => "io",
        };
        f.write_str(s)
    }
}

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, thiserror::Error)]
#[error("missing log {0}")]
pub struct MissingLog(pub PathBuf);

/// Any failure, tagged with the stage that raised it.
#[derive(Debug)]
pub struct PipelineError {
    pub stage: Stage,
    context: Option<String>,
    source: BoxError,
}

impl PipelineError {
    pub fn new(stage: Stage, err: impl Into<BoxError>) -> Self {
        Self {
            stage,
            context: None,
            source: err.into(),
        }
    }

    pub fn msg(stage: Stage, text: impl fmt::Display) -> Self {
        Self::new(stage, text.to_string())
    }

    pub fn missing_log(stage: Stage, path: &Path) -> Self {
        Self::new(stage, MissingLog(path.to_path_buf()))
    }

    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.context = Some(what.to_string());
        self
    }

    pub fn is_missing_log(&self) -> bool {
        self.source.is::<MissingLog>()
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] ", self.stage)?;
        if let Some(c) = &self.context {
            write!(f, "{c}: ")?;
        }
        write!(f, "{}", self.source)
    }
}

impl std::error::Error for PipelineError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(self.source.as_ref())
    }
}

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Written last; its presence marks a completed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 of the persisted `config.toml`.
    pub config_sha256: String,
    pub artifact_version: String,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub seed: u64,
    pub mode: RunMode,
    pub stats: RunStats,
    pub summary: ReportSummary,
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn io_err(e: std::io::Error) -> PipelineError {
    PipelineError::new(Stage::Io, e)
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(io_err)?;
    f.write_all(bytes).map_err(io_err)?;
    f.sync_all().map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(io_err)
}

/// Prepares `out`: creates it, drops any manifest of an earlier run and
/// persists the config. Returns the config hash.
pub fn init_run_dir(cfg: &RunConfig, out: &Path) -> Result<String, PipelineError> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| io_err(e).context(out.display()))?;
    match std::fs::remove_file(out.join(MANIFEST_FILE)) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(io_err(e)),
        _ => {}
    }
    let text = cfg.to_toml()?;
    write_atomic(&out.join(CONFIG_FILE), text.as_bytes())?;
    Ok(config_hash(&text))
}

/// Reads the config persisted in a run directory.
pub fn load_run_config(dir: &Path) -> Result<RunConfig, PipelineError> {
    let p = dir.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&p).map_err(|_| PipelineError::missing_log(Stage::Config, &p))?;
    let cfg = RunConfig::from_toml_str(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// All stages, then the report, then the manifest.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunManifest, PipelineError> {
    let started = unix_ms();
    let hash = init_run_dir(cfg, out)?;
    let stats = execute(cfg, out)?;
    let summary = report(out)?;
    let manifest = RunManifest {
        config_sha256: hash,
        artifact_version: ARTIFACT_VERSION.to_string(),
        started_unix_ms: started,
        finished_unix_ms: unix_ms(),
        seed: cfg.seed,
        mode: cfg.mode,
        stats,
        summary,
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| PipelineError::new(Stage::Io, e))?;
    write_atomic(&out.join(MANIFEST_FILE), &json)?;
    Ok(manifest)
}
