//! Report payloads and plain-text tables.
//!
//! `ExperimentReport` is the structured, deterministic payload (no wall-clock
//! data). Timings live in a separate `TimingReport` so that two runs with the
//! same configuration produce byte-identical result files.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::hoi::HoiApReport;
use super::point::PapReport;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TriggerMode {
    /// Detector runs exactly on annotated contact frames.
    Oracle,
    /// Detector runs when the recognizer fired within the trailing window.
    Window { frames: u64 },
}

impl TriggerMode {
    pub fn label(&self) -> String {
        match self {
            TriggerMode::Oracle => "oracle".to_string(),
            TriggerMode::Window { frames } => format!("window@{frames}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowResult {
    pub label: String,
    pub trigger: TriggerMode,
    pub iou_threshold: f64,
    pub hoi: Option<HoiApReport>,
    pub p_ap: Option<PapReport>,
    /// Detector invocations over the whole corpus.
    pub od_invocations: u64,
    /// Invocations that landed on evaluated frames.
    pub evaluated_invocations: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub corpus: String,
    pub seed: u64,
    pub box_iou_match: f64,
    pub rows: Vec<RowResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTimingSummary {
    pub label: String,
    pub frames: u64,
    pub od_frames: u64,
    pub mean_recognizer_s: f64,
    pub mean_detector_s: f64,
    /// Mean wall time per frame, all stages included.
    pub mean_frame_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub rows: Vec<StageTimingSummary>,
}

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

fn ap_cells(row: &RowResult) -> [String; 4] {
    match &row.hoi {
        Some(h) => [pct(h.ap_hand), pct(h.ap_hand_state), pct(h.ap_hand_side), pct(h.ap_hand_all)],
        None => std::array::from_fn(|_| "-".to_string()),
    }
}

fn render(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = String>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(s, "{c:<w$}");
            } else {
                let _ = write!(s, " | {c:>w$}");
            }
        }
        s.push('\n');
        s
    };
    let mut out = line(&mut header.iter().map(|h| h.to_string()));
    let total: usize = widths.iter().sum::<usize>() + 3 * (widths.len() - 1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for r in rows {
        out.push_str(&line(&mut r.iter().cloned()));
    }
    out
}

/// Association threshold sweep: one line per threshold, APs in percent.
pub fn render_threshold_table(rows: &[RowResult]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![format!("{}", r.iou_threshold)];
            v.extend(ap_cells(r));
            v
        })
        .collect();
    render(&["IoU Threshold", "AP Hand(%)", "AP Hand+State(%)", "AP Hand+Side(%)", "AP Hand+All(%)"], &body)
}

/// Trigger comparison: one line per method, with optional mean frame time.
pub fn render_method_table(rows: &[RowResult], timings: Option<&TimingReport>) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.label.clone()];
            v.extend(ap_cells(r));
            let t = timings
                .and_then(|t| t.rows.iter().find(|s| s.label == r.label))
                .map(|s| format!("{:.6}", s.mean_frame_s))
                .unwrap_or_else(|| "-".to_string());
            v.push(t);
            v.push(r.error.clone().unwrap_or_default());
            v
        })
        .collect();
    render(
        &["Method", "AP Hand(%)", "AP Hand+State(%)", "AP Hand+Side(%)", "AP Hand+All(%)", "Execution Time(s)", "Error"],
        &body,
    )
}

/// Point-level AP per threshold, one column per row.
pub fn render_pap_table(rows: &[RowResult]) -> String {
    let with: Vec<&RowResult> = rows.iter().filter(|r| r.p_ap.is_some()).collect();
    let Some(first) = with.first().and_then(|r| r.p_ap.as_ref()) else {
        return String::new();
    };
    let mut header = vec!["Threshold (frames)".to_string()];
    header.extend(with.iter().map(|r| r.label.clone()));
    let mut body: Vec<Vec<String>> = first
        .per_threshold
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut v = vec![e.threshold_frames.to_string()];
            v.extend(with.iter().map(|r| pct(r.p_ap.as_ref().unwrap().per_threshold[i].ap)));
            v
        })
        .collect();
    let mut mean = vec!["mean".to_string()];
    mean.extend(with.iter().map(|r| pct(r.p_ap.as_ref().unwrap().mean)));
    body.push(mean);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    render(&header, &body)
}
