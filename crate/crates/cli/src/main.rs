use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use intersection_edge::detemu::NoiseProfile;
use intersection_edge::pipeline::verify::{self, CriterionResult, Workbench};
use intersection_edge::pipeline::{
    self, init_run_dir, load_run_config, RunConfig, RunMode, SinkKind,
};

const OUT_ENV: &str = "INTERSECTION_EDGE_OUT";
const DEFAULT_OUT: &str = "runs/latest";

#[derive(Parser)]
#[command(name = "intersection-edge", version, about = "Smart-intersection edge node on synthetic traffic")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Where radar datagrams go.
    #[arg(long, global = true, value_enum)]
    sink: Option<Sink>,
    /// Run directory. Falls back to $INTERSECTION_EDGE_OUT, then the
    /// config's `out_dir`, then `runs/latest`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Exit non-zero when an acceptance check fails.
    #[arg(long = "assert", global = true)]
    assert_checks: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sink {
    Udp,
    File,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Virtual,
    Realtime,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the scene: ground truth and routes.
    Generate,
    /// Emulate the detector over the ground truth.
    Detect,
    /// Track the logged detections.
    Track,
    /// Raw distancing flags from the logged tracks.
    Analyze,
    /// Replay the logged tracks to the radar sink.
    Broadcast {
        /// Send at the frame rate instead of as fast as possible.
        #[arg(long)]
        pace: bool,
    },
    /// All stages, the report and the manifest.
    Run {
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Rebuild the report bundle from the logs of a run directory.
    Report,
    /// Run the acceptance suite.
    Verify {
        /// Measure the latency budget on the simulated clock instead of a
        /// five-minute paced run.
        #[arg(long)]
        quick: bool,
        /// Run only these criteria (1-10).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.sink {
            cfg.radar.sink = s.into();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self, cfg: Option<&RunConfig>) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .or_else(|| cfg.and_then(|c| c.out_dir.clone()))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    /// Config persisted in an existing run directory, with CLI overrides.
    fn persisted(&self, dir: &Path) -> Result<RunConfig> {
        let mut cfg = load_run_config(dir).with_context(|| format!("{} is not a run directory", dir.display()))?;
        if let Some(s) = self.sink {
            cfg.radar.sink = s.into();
        }
        Ok(cfg)
    }
}

impl From<Sink> for SinkKind {
    fn from(s: Sink) -> Self {
        match s {
            Sink::Udp => SinkKind::Udp,
            Sink::File => SinkKind::File,
            Sink::None => SinkKind::None,
        }
    }
}

fn print_results(results: &[CriterionResult]) -> bool {
    for r in results {
        println!("{r}");
    }
    let passed = results.iter().filter(|r| r.passed).count();
    println!("{passed}/{} passed", results.len());
    passed == results.len()
}

/// Run-level checks: the latency budget always, turn accuracy when the
/// scene has finished vehicle routes, the AP bands under the default noise.
fn run_checks(cfg: &RunConfig, m: &pipeline::RunManifest) -> Vec<CriterionResult> {
    let s = &m.summary;
    let mut out = Vec::new();
    let p99 = s.latency_p99_us.unwrap_or(0);
    out.push(CriterionResult {
        id: 1,
        name: "latency budget",
        passed: p99 < cfg.radar.budget_us,
        detail: format!("p99 {p99} us, budget {} us", cfg.radar.budget_us),
    });
    if s.turns_truth > 0 {
        let acc = s.turn_accuracy.unwrap_or(0.0);
        out.push(CriterionResult {
            id: 6,
            name: "turn counting",
            passed: acc >= 0.95,
            detail: format!("accuracy {acc:.4}"),
        });
    }
    if cfg.noise == NoiseProfile::default() && !s.ap.is_empty() {
        let get = |c| s.ap.get(&c).copied().unwrap_or(0.0);
        let (ped, veh) = (
            get(intersection_edge::ObjectClass::Pedestrian),
            get(intersection_edge::ObjectClass::Vehicle),
        );
        let band = |v: f64, b: (f64, f64)| v >= b.0 && v <= b.1;
        out.push(CriterionResult {
            id: 4,
            name: "detector AP band",
            passed: band(ped, verify::PEDESTRIAN_AP_BAND) && band(veh, verify::VEHICLE_AP_BAND),
            detail: format!("pedestrian {ped:.4} vehicle {veh:.4}"),
        });
    }
    out
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    let c = &cli.common;
    match cli.command {
        Command::Generate => {
            let cfg = c.config()?;
            let out = c.out_dir(Some(&cfg));
            init_run_dir(&cfg, &out)?;
            let n = pipeline::stage_generate(&cfg, &out)?;
            println!("generated {n} frames in {}", out.display());
        }
        Command::Detect => {
            let out = c.out_dir(None);
            let n = pipeline::stage_detect(&c.persisted(&out)?, &out)?;
            println!("{n} detections");
        }
        Command::Track => {
            let out = c.out_dir(None);
            let n = pipeline::stage_track(&c.persisted(&out)?, &out)?;
            println!("{n} track records");
        }
        Command::Analyze => {
            let out = c.out_dir(None);
            let n = pipeline::stage_analyze(&c.persisted(&out)?, &out)?;
            println!("{n} raw distancing flags");
        }
        Command::Broadcast { pace } => {
            let out = c.out_dir(None);
            let s = pipeline::stage_broadcast(&c.persisted(&out)?, &out, pace)?;
            println!("{} frames, {} datagrams sent, {} dropped", s.frames, s.datagrams_sent, s.datagrams_dropped);
        }
        Command::Run { mode } => {
            let mut cfg = c.config()?;
            if let Some(m) = mode {
                cfg.mode = match m {
                    Mode::Virtual => RunMode::Virtual,
                    Mode::Realtime => RunMode::Realtime,
                };
            }
            let out = c.out_dir(Some(&cfg));
            let m = pipeline::run(&cfg, &out)?;
            print_summary(&out, &m);
            if c.assert_checks {
                return Ok(print_results(&run_checks(&cfg, &m)));
            }
        }
        Command::Report => {
            let out = c.out_dir(None);
            let s = pipeline::report(&out)?;
            println!(
                "report for {} frames written to {}",
                s.frames,
                out.join(pipeline::REPORT_DIR).display()
            );
        }
        Command::Verify { quick, only } => {
            if let Some(bad) = only.iter().find(|&&i| !(1..=10).contains(&i)) {
                bail!("no criterion {bad}");
            }
            let cfg = c.config()?;
            let work = c.out_dir(Some(&cfg)).join("verify");
            let mode = if quick { RunMode::Virtual } else { RunMode::Realtime };
            let mut wb = Workbench::new(cfg, &work).with_latency_mode(mode);
            let results = if only.is_empty() {
                verify::run_all(&mut wb)
            } else {
                verify::run_selected(&mut wb, &only)
            };
            let ok = print_results(&results);
            return Ok(ok || !c.assert_checks);
        }
    }
    Ok(true)
}

fn print_summary(out: &Path, m: &pipeline::RunManifest) {
    let s = &m.summary;
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    let classes = |map: &std::collections::BTreeMap<intersection_edge::ObjectClass, f64>| {
        map.iter().map(|(c, v)| format!("{c} {v:.4}")).collect::<Vec<_>>().join(", ")
    };
    println!("run complete: {} frames in {}", m.stats.frames, out.display());
    println!("  datagrams sent {} dropped {}", m.stats.datagrams_sent, m.stats.datagrams_dropped);
    println!("  turns {} (truth {}), accuracy {}", s.turns_predicted, s.turns_truth, opt(s.turn_accuracy));
    println!("  AP: {}", classes(&s.ap));
    println!("  MOTA: {}", classes(&s.mota));
    println!(
        "  distancing F1 {:.4} with validation, {:.4} without; {} events",
        s.f1_with_validation.f1, s.f1_without_validation.f1, s.violation_events
    );
    println!(
        "  latency p99 {} us, budget violation rate {}",
        s.latency_p99_us.map_or("-".to_string(), |v| v.to_string()),
        opt(s.budget_violation_rate)
    );
}
