use std::fs;
use std::path::{Path, PathBuf};

use intersection_edge::pipeline::{self, *};
use intersection_edge::radar::{decode, read_capture};

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn short(seed: u64, secs: f64) -> RunConfig {
    let mut cfg = RunConfig { seed, ..RunConfig::default() };
    cfg.scene.duration_s = secs;
    cfg.radar.sink = SinkKind::File;
    cfg
}

/// Logs whose content does not depend on wall-clock timing.
const DETERMINISTIC: [&str; 7] = [CONFIG_FILE, TRUTH_LOG, ROUTES_LOG, DETECTION_LOG, TRACK_LOG, FLAGS_LOG, CAPTURE_FILE];

/// Report files free of measured latencies.
const STABLE_REPORT: [&str; 10] = [
    TURNS_CSV,
    TURNS_TRUTH_CSV,
    FLAGS_CSV,
    EVENTS_CSV,
    HISTOGRAM_CSV,
    HISTOGRAM_SVG,
    F1_CSV,
    MOTA_CSV,
    AP_CSV,
    AUDIT_CSV,
];

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(name).display()))
}

#[test]
fn runs_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let cfg = short(11, 20.0);
    let ma = pipeline::run(&cfg, &a).unwrap();
    let mb = pipeline::run(&cfg, &b).unwrap();
    for f in DETERMINISTIC {
        assert_eq!(read(&a, f), read(&b, f), "{f} differs");
    }
    assert_eq!(ma.config_sha256, mb.config_sha256);
    assert_eq!(ma.stats.frames, 600);
    let text = fs::read_to_string(a.join(CONFIG_FILE)).unwrap();
    assert_eq!(ma.config_sha256, config_hash(&text));
    let stored: RunManifest = serde_json::from_slice(&read(&a, MANIFEST_FILE)).unwrap();
    assert_eq!(stored, ma);
}

#[test]
fn staged_run_matches_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (full, staged) = (tmp.path().join("full"), tmp.path().join("staged"));
    let cfg = short(3, 20.0);
    pipeline::run(&cfg, &full).unwrap();

    init_run_dir(&cfg, &staged).unwrap();
    stage_generate(&cfg, &staged).unwrap();
    stage_detect(&cfg, &staged).unwrap();
    stage_track(&cfg, &staged).unwrap();
    stage_analyze(&cfg, &staged).unwrap();
    let stats = stage_broadcast(&cfg, &staged, false).unwrap();
    assert_eq!(stats.frames, 600);
    pipeline::report(&staged).unwrap();

    for f in [CONFIG_FILE, TRUTH_LOG, ROUTES_LOG, DETECTION_LOG, TRACK_LOG, FLAGS_LOG] {
        assert_eq!(read(&full, f), read(&staged, f), "{f} differs");
    }
    for f in STABLE_REPORT {
        let (a, b) = (full.join(REPORT_DIR), staged.join(REPORT_DIR));
        assert_eq!(read(&a, f), read(&b, f), "report {f} differs");
    }
    // Staged broadcast differences positions for velocity, so only the
    // frame sequence and object count per frame must agree.
    let cap = |d: &Path| -> Vec<(u64, usize)> {
        read_capture(fs::File::open(d.join(CAPTURE_FILE)).unwrap())
            .unwrap()
            .iter()
            .map(|b| decode(b).unwrap())
            .map(|m| (m.frame_seq, m.objects.len()))
            .collect()
    };
    assert_eq!(cap(&full), cap(&staged));
    assert!(!staged.join(MANIFEST_FILE).exists());
}

#[test]
fn empty_scene_sends_heartbeats_only() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(&workspace().join("configs/minimal-empty.toml")).unwrap();
    let m = pipeline::run(&cfg, tmp.path()).unwrap();
    assert_eq!(m.stats.frames, 300);
    let msgs: Vec<_> = read_capture(fs::File::open(tmp.path().join(CAPTURE_FILE)).unwrap())
        .unwrap()
        .iter()
        .map(|b| decode(b).unwrap())
        .collect();
    assert_eq!(msgs.len(), 300);
    for (i, m) in msgs.iter().enumerate() {
        assert_eq!(m.frame_seq, i as u64);
        assert!(m.objects.is_empty());
    }
    assert_eq!(m.summary.turns_predicted, 0);
    assert_eq!(m.summary.raw_flags, 0);
    assert!(m.summary.ap.is_empty());
    let hist = fs::read_to_string(tmp.path().join(REPORT_DIR).join(HISTOGRAM_CSV)).unwrap();
    assert_eq!(hist.lines().count(), 1);
}

#[test]
fn report_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let m = pipeline::run(&short(5, 15.0), tmp.path()).unwrap();
    let dir = tmp.path().join(REPORT_DIR);
    let mut names: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let before: Vec<_> = names.iter().map(|n| fs::read(dir.join(n)).unwrap()).collect();
    let again = pipeline::report(tmp.path()).unwrap();
    let after: Vec<_> = names.iter().map(|n| fs::read(dir.join(n)).unwrap()).collect();
    assert_eq!(before, after);
    assert_eq!(again, m.summary);
}

#[test]
fn failed_run_leaves_no_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short(5, 5.0);
    pipeline::run(&cfg, tmp.path()).unwrap();
    assert!(tmp.path().join(MANIFEST_FILE).exists());
    // A directory where the track log should go makes the run fail midway.
    fs::remove_file(tmp.path().join(TRACK_LOG)).unwrap();
    fs::create_dir(tmp.path().join(TRACK_LOG)).unwrap();
    let err = pipeline::run(&cfg, tmp.path()).unwrap_err();
    assert!(!tmp.path().join(MANIFEST_FILE).exists(), "{err}");
}

#[test]
fn report_without_logs_names_the_missing_file() {
    let tmp = tempfile::tempdir().unwrap();
    init_run_dir(&short(1, 5.0), tmp.path()).unwrap();
    let err = pipeline::report(tmp.path()).unwrap_err();
    assert!(err.is_missing_log(), "{err}");
}

#[test]
fn shipped_configs_load() {
    let default = RunConfig::load(&workspace().join("configs/default.toml")).unwrap();
    assert_eq!(default, RunConfig::default());
    let empty = RunConfig::load(&workspace().join("configs/minimal-empty.toml")).unwrap();
    empty.validate().unwrap();
    assert_eq!(empty.seed, 1);
}

#[test]
fn invalid_config_is_rejected_before_anything_is_written() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = short(1, 5.0);
    cfg.scene.frame_rate = 0.0;
    let err = pipeline::run(&cfg, &tmp.path().join("out")).unwrap_err();
    assert_eq!(err.stage, Stage::Config);
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn validation_never_hurts_f1() {
    let tmp = tempfile::tempdir().unwrap();
    let m = pipeline::run(&short(7, 60.0), tmp.path()).unwrap();
    let s = &m.summary;
    assert!(s.validated_flags <= s.raw_flags);
    assert!(s.f1_with_validation.f1 >= s.f1_without_validation.f1, "{s:?}");
}

/// Report of a fixed short run, compared file by file with the copy under
/// `tests/golden`. Set `UPDATE_GOLDEN=1` to rewrite it.
#[test]
fn report_matches_golden_files() {
    let tmp = tempfile::tempdir().unwrap();
    pipeline::run(&short(7, 30.0), tmp.path()).unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let dir = tmp.path().join(REPORT_DIR);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(&golden).unwrap();
        for f in STABLE_REPORT {
            fs::copy(dir.join(f), golden.join(f)).unwrap();
        }
    }
    for f in STABLE_REPORT {
        let want = fs::read_to_string(golden.join(f)).unwrap_or_else(|_| panic!("golden {f} missing"));
        assert_eq!(fs::read_to_string(dir.join(f)).unwrap(), want, "{f}");
    }
}
