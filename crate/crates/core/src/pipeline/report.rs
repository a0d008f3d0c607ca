use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::logs::*;
use super::run::{crop_dims, load_detections, load_tracks, load_truth, open};
use super::{load_run_config, write_atomic, PipelineError, Stage};
use crate::analytics::{
    count_turns, merge_events, score_violations, truth_violations, validate_groups, violation_durations, write_f1_csv,
    write_histogram_csv, F1Score, Histories, HistogramBin, TurnCount,
};
use crate::anonymize::{blur_boxes, evaluate_recall, sensitive_regions, write_audit_csv, RecallReport, SensitiveKind};
use crate::detemu::{evaluate_ap, truth_boxes};
use crate::radar::{budget_report, write_budget_csv};
use crate::scenesim::{truth_turn_label, visible_boxes, FrameTruth};
use crate::tracker::{evaluate_mota, LabeledBox, MotaReport};
use crate::types::{ObjectClass, WorldPoint};

pub const TURNS_CSV: &str = "turn_counts.csv";
pub const TURNS_TRUTH_CSV: &str = "turn_counts_truth.csv";
pub const FLAGS_CSV: &str = "violations_validated.csv";
pub const EVENTS_CSV: &str = "violation_events.csv";
pub const HISTOGRAM_CSV: &str = "violation_histogram.csv";
pub const HISTOGRAM_SVG: &str = "violation_histogram.svg";
pub const F1_CSV: &str = "violation_f1.csv";
pub const MOTA_CSV: &str = "mota.csv";
pub const AP_CSV: &str = "ap.csv";
pub const AUDIT_CSV: &str = "anonymization_audit.csv";
pub const BUDGET_CSV: &str = "latency_budget.csv";
pub const SUMMARY_JSON: &str = "summary.json";

/// Headline metrics of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub frames: u64,
    pub turns_predicted: u64,
    pub turns_truth: u64,
    pub turn_accuracy: Option<f64>,
    pub ap: BTreeMap<ObjectClass, f64>,
    pub mota: BTreeMap<ObjectClass, f64>,
    pub raw_flags: u64,
    pub validated_flags: u64,
    pub violation_events: u64,
    pub f1_without_validation: F1Score,
    pub f1_with_validation: F1Score,
    pub recall: RecallReport,
    pub latency_p99_us: Option<u64>,
    pub budget_violation_rate: Option<f64>,
}

fn put(dir: &Path, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<(), PipelineError> {
    let mut buf = Vec::new();
    fill(&mut buf).map_err(|e| PipelineError::new(Stage::Report, e))?;
    write_atomic(&dir.join(name), &buf)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v:.6}"))
}

/// Bar chart of violation durations.
pub fn histogram_svg(bins: &[HistogramBin], bin_s: f64) -> String {
    let (w, h, pad) = (640.0, 360.0, 48.0);
    let top = bins.iter().map(|b| b.count).max().unwrap_or(0).max(1) as f64;
    let bw = if bins.is_empty() { 0.0 } else { (w - 2.0 * pad) / bins.len() as f64 };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/>"#,
        y = h - pad,
        x2 = w - pad
    );
    let _ = writeln!(s, r#"<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{y}" stroke="black"/>"#, y = h - pad);
    for (i, b) in bins.iter().enumerate() {
        let bh = (h - 2.0 * pad) * b.count as f64 / top;
        let x = pad + i as f64 * bw;
        let _ = writeln!(
            s,
            r##"<rect x="{x:.2}" y="{y:.2}" width="{bw:.2}" height="{bh:.2}" fill="#4a78b5" stroke="white"/>"##,
            y = h - pad - bh
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{ty}" text-anchor="middle">{lo}</text>"#,
            cx = x + bw / 2.0,
            ty = h - pad + 14.0,
            lo = b.lower_s
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{cx}" y="{ty}" text-anchor="middle">violation duration (s, bins of {bin_s} s)</text>"#,
        cx = w / 2.0,
        ty = h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{cy}" transform="rotate(-90 14 {cy})" text-anchor="middle">events (max {top})</text>"#,
        cy = h / 2.0
    );
    s.push_str("</svg>\n");
    s
}

/// Truth restricted to objects with a visible footprint in the crop.
fn visible_truth(truth: &[FrameTruth], boxes: &[Vec<crate::scenesim::ProjectedBox>]) -> Vec<FrameTruth> {
    truth
        .iter()
        .zip(boxes)
        .map(|(f, b)| {
            let ids: HashSet<u64> = b.iter().map(|x| x.id).collect();
            FrameTruth {
                objects: f.objects.iter().filter(|o| ids.contains(&o.id)).cloned().collect(),
                ..f.clone()
            }
        })
        .collect()
}

/// Per-frame track id -> truth id from the MOTA matching.
fn track_to_truth(mota: &MotaReport) -> HashMap<u64, HashMap<u64, u64>> {
    mota.frame_matches
        .iter()
        .enumerate()
        .map(|(f, m)| (f as u64, m.iter().map(|&(g, t)| (t, g)).collect()))
        .collect()
}

/// Builds the `report/` bundle from the logs of a run directory. Reads
/// only persisted logs and the persisted config, so repeated calls give
/// identical files.
pub fn report(dir: &Path) -> Result<ReportSummary, PipelineError> {
    let cfg = load_run_config(dir)?;
    let camera = cfg.camera.build()?;
    let dims = crop_dims(&camera);
    let scene = cfg.scene_config();
    let fps = scene.frame_rate;
    let out = dir.join(REPORT_DIR);
    std::fs::create_dir_all(&out).map_err(|e| PipelineError::new(Stage::Report, e))?;
    let stage = Stage::Report;
    let err = |e: Box<dyn std::error::Error + Send + Sync>| PipelineError::new(stage, e);

    let truth = load_truth(&cfg, dir, stage)?;
    let routes = read_routes(open(dir, ROUTES_LOG, stage)?).map_err(|e| err(e.into()))?;
    let detections = load_detections(&cfg, dir, stage)?;
    let tracks = load_tracks(&cfg, dir, stage)?;
    let raw = read_flags(open(dir, FLAGS_LOG, stage)?).map_err(|e| err(e.into()))?;
    let boxes: Vec<Vec<_>> = truth
        .iter()
        .map(|f| visible_boxes(f, &camera.world_to_crop, dims))
        .collect::<Result<_, _>>()
        .map_err(|e| err(e.into()))?;
    let mut summary = ReportSummary {
        frames: truth.len() as u64,
        raw_flags: raw.len() as u64,
        ..Default::default()
    };

    // Turn counts.
    let mut fragments: BTreeMap<u64, (ObjectClass, Vec<(u64, WorldPoint)>)> = BTreeMap::new();
    for r in tracks.iter().flatten() {
        fragments.entry(r.track_id).or_insert((r.class, Vec::new())).1.push((r.frame_index, r.world));
    }
    let arms = scene.arm_polygons();
    let vehicle_frags: Vec<_> = fragments
        .values()
        .filter(|f| f.0 == ObjectClass::Vehicle)
        .map(|f| f.1.clone())
        .collect();
    let predicted = count_turns(&vehicle_frags, &arms, &cfg.turns);
    let mut truth_turns = TurnCount::default();
    for (id, r) in &routes {
        if r.class == ObjectClass::Vehicle {
            if let Ok(m) = truth_turn_label(*id, r) {
                truth_turns.record(r.entry, m);
            }
        }
    }
    summary.turns_predicted = predicted.total();
    summary.turns_truth = truth_turns.total();
    summary.turn_accuracy = predicted.accuracy_against(&truth_turns);
    put(&out, TURNS_CSV, |w| predicted.write_csv(w))?;
    put(&out, TURNS_TRUTH_CSV, |w| truth_turns.write_csv(w))?;

    // Detection AP.
    let flat_dets: Vec<_> = detections.iter().flatten().copied().collect();
    let ap = evaluate_ap(&flat_dets, &truth_boxes(&boxes), cfg.evaluation.ap_iou).ok();
    if let Some(ap) = &ap {
        summary.ap = ap.per_class.clone();
    }
    put(&out, AP_CSV, |w| {
        writeln!(w, "class,ap")?;
        for c in ObjectClass::ALL {
            writeln!(w, "{c},{}", fmt_opt(ap.as_ref().and_then(|a| a.get(c))))?;
        }
        Ok(())
    })?;

    // Tracking MOTA.
    let hyp: Vec<Vec<LabeledBox>> = tracks
        .iter()
        .map(|f| {
            f.iter()
                .map(|r| LabeledBox {
                    id: r.track_id,
                    class: r.class,
                    bbox: r.bbox(),
                })
                .collect()
        })
        .collect();
    let gt: Vec<Vec<LabeledBox>> = boxes
        .iter()
        .map(|f| {
            f.iter()
                .map(|b| LabeledBox {
                    id: b.id,
                    class: b.class,
                    bbox: b.bbox,
                })
                .collect()
        })
        .collect();
    let mota = evaluate_mota(&hyp, &gt, cfg.evaluation.mota_iou).ok();
    put(&out, MOTA_CSV, |w| {
        writeln!(w, "class,gt,fn,fp,idsw,matches,mota")?;
        if let Some(m) = &mota {
            for (c, k) in m.per_class.iter().map(|(c, k)| (c.to_string(), k)).chain([("all".to_string(), &m.overall)]) {
                writeln!(w, "{c},{},{},{},{},{},{}", k.gt, k.fn_, k.fp, k.idsw, k.matches, fmt_opt(k.mota()))?;
            }
        }
        Ok(())
    })?;
    if let Some(m) = &mota {
        summary.mota = m.per_class.iter().filter_map(|(c, k)| k.mota().map(|v| (*c, v))).collect();
    }

    // Social distancing.
    let histories: Histories = fragments
        .iter()
        .filter(|(_, f)| f.0 == ObjectClass::Pedestrian)
        .map(|(id, f)| (*id, f.1.clone()))
        .collect();
    let mut groups = cfg.distancing.groups;
    groups.frame_rate = fps;
    let validation = validate_groups(&raw, &histories, &groups);
    summary.validated_flags = validation.kept.len() as u64;
    put(&out, FLAGS_CSV, |w| {
        writeln!(w, "{FLAGS_HEADER}")?;
        write_flags(w, &validation.kept)
    })?;
    let events = merge_events(&validation.kept, cfg.distancing.merge_gap_frames);
    let events: Vec<_> = events
        .into_iter()
        .filter(|e| e.duration_s(fps) >= cfg.distancing.min_event_s)
        .collect();
    summary.violation_events = events.len() as u64;
    put(&out, EVENTS_CSV, |w| {
        writeln!(w, "track_a,track_b,start_frame,end_frame,duration_s,min_distance_m")?;
        for e in &events {
            writeln!(
                w,
                "{},{},{},{},{:.6},{:.6}",
                e.pair.0,
                e.pair.1,
                e.start_frame,
                e.end_frame,
                e.duration_s(fps),
                e.min_distance
            )?;
        }
        Ok(())
    })?;
    let bin_s = cfg.distancing.histogram_bin_s;
    let bins = violation_durations(&events, fps, bin_s, cfg.distancing.min_event_s);
    put(&out, HISTOGRAM_CSV, |w| write_histogram_csv(w, &bins, bin_s))?;
    put(&out, HISTOGRAM_SVG, |w| w.write_all(histogram_svg(&bins, bin_s).as_bytes()))?;
    let truth_flags = truth_violations(&visible_truth(&truth, &boxes), cfg.distancing.threshold_m);
    let matches = mota.as_ref().map(track_to_truth).unwrap_or_default();
    summary.f1_without_validation = score_violations(&raw, &matches, &truth_flags);
    summary.f1_with_validation = score_violations(&validation.kept, &matches, &truth_flags);
    put(&out, F1_CSV, |w| {
        write_f1_csv(
            w,
            &[
                ("without_validation", summary.f1_without_validation),
                ("with_validation", summary.f1_with_validation),
            ],
        )
    })?;

    // Anonymization audit.
    let mut recall = RecallReport::default();
    for (b, d) in boxes.iter().zip(&detections) {
        let truth_regions = sensitive_regions(b, &cfg.anonymize.regions);
        let blurred = if cfg.anonymize.enabled {
            blur_boxes(d, &cfg.anonymize.regions)
        } else {
            Vec::new()
        };
        recall.merge(&evaluate_recall(&blurred, &truth_regions, &cfg.anonymize.recall));
    }
    for k in SensitiveKind::ALL {
        recall.per_kind.entry(k).or_default();
    }
    put(&out, AUDIT_CSV, |w| write_audit_csv(w, &recall))?;
    summary.recall = recall;

    // Latency budget; a staged run without a full pipeline has no traces.
    match open(dir, TRACES_LOG, stage) {
        Ok(r) => {
            let traces = read_traces(r).map_err(|e| err(e.into()))?;
            if let Ok(b) = budget_report(&traces, cfg.radar.budget_us) {
                summary.latency_p99_us = Some(b.end_to_end.p99_us);
                summary.budget_violation_rate = Some(b.violation_rate);
                put(&out, BUDGET_CSV, |w| write_budget_csv(w, &b))?;
            }
        }
        Err(e) if e.is_missing_log() => {}
        Err(e) => return Err(e),
    }

    let json = serde_json::to_vec_pretty(&summary).map_err(|e| err(e.into()))?;
    write_atomic(&out.join(SUMMARY_JSON), &json)?;
    Ok(summary)
}
