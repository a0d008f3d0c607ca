//! Turn counting and social-distancing analysis on confirmed tracks.

mod distancing;
mod turns;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use distancing::{
    f1, merge_events, pairwise_violations, score_violations, truth_violations, validate_groups, violation_durations,
    write_histogram_csv, EventBuilder, F1Score, GroupLabel, GroupParams, GroupValidation, HistogramBin, Histories,
    PairFrame, PairOutcome, PositionFrame, TruthPairFrame, ViolationEvent,
};
pub use turns::{classify_turn, count_turns, stitch_fragments, StitchParams, TurnCount, TurnOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistancingConfig {
    pub threshold_m: f64,
    pub groups: GroupParams,
    /// Missing frames bridged when merging flags into events.
    pub merge_gap_frames: u64,
    /// Events shorter than this are not reported.
    pub min_event_s: f64,
    pub histogram_bin_s: f64,
}

impl Default for DistancingConfig {
    fn default() -> Self {
        Self {
            threshold_m: 2.0,
            groups: GroupParams::default(),
            merge_gap_frames: 2,
            min_event_s: 0.0,
            histogram_bin_s: 1.0,
        }
    }
}

pub fn write_f1_csv(mut w: impl Write, rows: &[(&str, F1Score)]) -> std::io::Result<()> {
    writeln!(w, "variant,tp,fp,fn,precision,recall,f1")?;
    for (name, s) in rows {
        writeln!(
            w,
            "{name},{},{},{},{:.6},{:.6},{:.6}",
            s.tp, s.fp, s.fn_, s.precision, s.recall, s.f1
        )?;
    }
    Ok(())
}
