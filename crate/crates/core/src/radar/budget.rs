use std::io::Write;

use serde::{Deserialize, Serialize};

pub const DEFAULT_BUDGET_US: u64 = 33_333;

/// Stage completion times of one frame, pipeline clock, microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyTrace {
    pub frame_seq: u64,
    pub t_acquire: u64,
    pub t_detect_done: u64,
    pub t_track_done: u64,
    pub t_analyze_done: u64,
    pub t_encode_done: u64,
    pub t_broadcast_done: u64,
}

pub const STAGES: [&str; 5] = ["detect", "track", "analyze", "encode", "broadcast"];

impl LatencyTrace {
    fn stamps(&self) -> [u64; 6] {
        [
            self.t_acquire,
            self.t_detect_done,
            self.t_track_done,
            self.t_analyze_done,
            self.t_encode_done,
            self.t_broadcast_done,
        ]
    }

    pub fn is_monotone(&self) -> bool {
        self.stamps().windows(2).all(|w| w[0] <= w[1])
    }

    /// Per-stage durations in [`STAGES`] order. Saturating, so a
    /// non-monotone trace yields zero-length stages.
    pub fn stage_deltas(&self) -> [u64; 5] {
        let s = self.stamps();
        std::array::from_fn(|i| s[i + 1].saturating_sub(s[i]))
    }

    pub fn end_to_end(&self) -> u64 {
        self.t_broadcast_done.saturating_sub(self.t_acquire)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no latency traces")]
pub struct EmptyTraces;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStats {
    pub p50_us: u64,
    pub p99_us: u64,
    pub max_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub frames: usize,
    pub budget_us: u64,
    /// In [`STAGES`] order.
    pub stages: Vec<(String, StageStats)>,
    pub end_to_end: StageStats,
    pub violations: usize,
    pub violation_rate: f64,
}

/// Nearest-rank percentile of sorted samples: element `ceil(p * n)`.
pub fn nearest_rank(sorted: &[u64], p: f64) -> u64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

fn stats(mut v: Vec<u64>) -> StageStats {
    v.sort_unstable();
    StageStats {
        p50_us: nearest_rank(&v, 0.50),
        p99_us: nearest_rank(&v, 0.99),
        max_us: *v.last().expect("non-empty"),
    }
}

/// A frame violates the budget when its end-to-end latency is strictly
/// above `budget_us`.
pub fn budget_report(traces: &[LatencyTrace], budget_us: u64) -> Result<BudgetReport, EmptyTraces> {
    if traces.is_empty() {
        return Err(EmptyTraces);
    }
    let stages = STAGES
        .iter()
        .enumerate()
        .map(|(i, name)| (name.to_string(), stats(traces.iter().map(|t| t.stage_deltas()[i]).collect())))
        .collect();
    let e2e: Vec<u64> = traces.iter().map(LatencyTrace::end_to_end).collect();
    let violations = e2e.iter().filter(|&&e| e > budget_us).count();
    Ok(BudgetReport {
        frames: traces.len(),
        budget_us,
        stages,
        end_to_end: stats(e2e),
        violations,
        violation_rate: violations as f64 / traces.len() as f64,
    })
}

pub fn write_budget_csv(mut w: impl Write, r: &BudgetReport) -> std::io::Result<()> {
    writeln!(w, "stage,p50_us,p99_us,max_us")?;
    for (name, s) in r.stages.iter().map(|(n, s)| (n.as_str(), s)).chain([("end_to_end", &r.end_to_end)]) {
        writeln!(w, "{name},{},{},{}", s.p50_us, s.p99_us, s.max_us)?;
    }
    Ok(())
}

pub fn write_traces_csv(mut w: impl Write, traces: &[LatencyTrace]) -> std::io::Result<()> {
    writeln!(
        w,
        "frame_seq,t_acquire,t_detect_done,t_track_done,t_analyze_done,t_encode_done,t_broadcast_done"
    )?;
    for t in traces {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            t.frame_seq, t.t_acquire, t.t_detect_done, t.t_track_done, t.t_analyze_done, t.t_encode_done, t.t_broadcast_done
        )?;
    }
    Ok(())
}
