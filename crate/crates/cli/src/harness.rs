//! Offline evaluation driver: one row per (trigger, association threshold),
//! rows evaluated in parallel, results written as deterministic JSON.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use egohoi_core::backends::{BackendKind, BackendSetup, BackendSpec};
use egohoi_core::dataset::{replay, AnnotatedVideo};
use egohoi_core::metrics::report::{
    render_method_table, render_pap_table, render_threshold_table, ExperimentReport, RowResult, StageTimingSummary,
    TimingReport, TriggerMode, REPORT_SCHEMA_VERSION,
};
use egohoi_core::metrics::{hoi_ap_sequences, p_ap_sequences, HoiFrameGT, PointPrediction, PointSequence};
use egohoi_core::{run_offline, AssociationConfig, CascadeConfig, Corpus, FrameInput, InteractionEvent};

use crate::config::ExperimentConfig;

pub const RESULTS_FILE: &str = "results.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const TABLES_FILE: &str = "tables.txt";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowSpec {
    pub trigger: TriggerMode,
    pub iou_threshold: f64,
}

impl RowSpec {
    pub fn label(&self) -> String {
        format!("{}/iou={}", self.trigger.label(), self.iou_threshold)
    }

    pub fn window_frames(&self) -> u64 {
        match self.trigger {
            TriggerMode::Oracle => 0,
            TriggerMode::Window { frames } => frames,
        }
    }
}

/// One evaluated event, as stored in `events.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLine {
    pub row: String,
    pub video_id: String,
    pub event: InteractionEvent,
}

#[derive(Debug, Clone)]
pub struct RowOutput {
    pub result: RowResult,
    pub timing: StageTimingSummary,
    pub events: Vec<EventLine>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: ExperimentReport,
    pub timings: TimingReport,
    pub events: Vec<EventLine>,
}

impl Evaluation {
    pub fn failed_rows(&self) -> impl Iterator<Item = &RowResult> {
        self.report.rows.iter().filter(|r| r.error.is_some())
    }
}

pub fn rows(cfg: &ExperimentConfig) -> Vec<RowSpec> {
    cfg.triggers
        .iter()
        .flat_map(|&trigger| cfg.iou_thresholds.iter().map(move |&iou_threshold| RowSpec { trigger, iou_threshold }))
        .collect()
}

fn setup(cfg: &ExperimentConfig, row: &RowSpec) -> BackendSetup {
    let recognizer = match row.trigger {
        TriggerMode::Oracle => BackendSpec { kind: BackendKind::Oracle, endpoint: None },
        TriggerMode::Window { .. } => cfg.recognizer.clone(),
    };
    BackendSetup {
        recognizer: Some(recognizer),
        detector: Some(cfg.detector.clone()),
        recognizer_noise: cfg.recognizer_noise,
        detector_noise: cfg.detector_noise,
        external: cfg.external.clone(),
        seed: cfg.seed,
    }
}

#[derive(Default)]
struct Accum {
    frames: u64,
    od_frames: u64,
    recognizer: Duration,
    detector: Duration,
    total: Duration,
}

struct VideoRun {
    events: Vec<InteractionEvent>,
    gt: Vec<HoiFrameGT>,
    contacts: Vec<u64>,
    predictions: Vec<PointPrediction>,
    od_invocations: u64,
    evaluated_invocations: u64,
}

fn run_video(cfg: &ExperimentConfig, corpus: &Corpus, row: &RowSpec, setup: &BackendSetup, video: &AnnotatedVideo, acc: &mut Accum) -> Result<VideoRun, String> {
    let id = &video.entry.video_id;
    let context = |e: &dyn std::fmt::Display| format!("video {id}: {e}");
    let mut recognizer = setup.build_recognizer(video).map_err(|e| context(&e))?;
    let mut detector = setup.build_detector(video).map_err(|e| context(&e))?;
    let cascade = CascadeConfig {
        window_frames: row.window_frames(),
        association: AssociationConfig { iou_threshold: row.iou_threshold, max_hands: cfg.max_hands },
        decision_threshold: cfg.recognizer_noise.decision_threshold,
    };
    let frames = replay(corpus, id, f64::INFINITY)
        .map_err(|e| context(&e))?
        .map(|r| r.map(FrameInput::from));
    let run = run_offline(frames, recognizer.as_mut(), detector.as_mut(), cascade, video.entry.geometry())
        .map_err(|e| context(&e))?;

    for f in &run.frames {
        acc.frames += 1;
        acc.recognizer += f.timing.recognizer;
        acc.total += f.timing.recognizer + f.timing.fusion;
        if let Some(d) = f.timing.detector {
            acc.od_frames += 1;
            acc.detector += d;
            acc.total += d;
        }
    }
    let contacts = video.contact_points();
    let cps: BTreeSet<u64> = contacts.iter().copied().collect();
    Ok(VideoRun {
        od_invocations: run.invoked_frames().count() as u64,
        evaluated_invocations: run.invoked_frames().filter(|f| cps.contains(f)).count() as u64,
        events: run.events.into_iter().filter(|e| cps.contains(&e.frame_index)).collect(),
        gt: video.contact_point_gt(),
        predictions: run
            .predictions
            .iter()
            .filter(|p| p.is_contact())
            .map(|p| PointPrediction::new(p.frame_index, p.confidence))
            .collect(),
        contacts,
    })
}

fn mean(d: Duration, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        d.as_secs_f64() / n as f64
    }
}

/// Evaluates one row over the whole corpus. Backend and metric failures are
/// reported in the row rather than aborting the experiment.
pub fn evaluate_row(cfg: &ExperimentConfig, corpus: &Corpus, row: &RowSpec) -> RowOutput {
    let label = row.label();
    let setup = setup(cfg, row);
    let mut acc = Accum::default();
    let runs: Result<Vec<VideoRun>, String> =
        corpus.videos.iter().map(|v| run_video(cfg, corpus, row, &setup, v, &mut acc)).collect();
    let mut result = RowResult {
        label: label.clone(),
        trigger: row.trigger,
        iou_threshold: row.iou_threshold,
        hoi: None,
        p_ap: None,
        od_invocations: 0,
        evaluated_invocations: 0,
        error: None,
    };
    let mut events = Vec::new();
    let scored = runs.and_then(|runs| {
        let seqs: Vec<_> = runs.iter().map(|r| (r.events.as_slice(), r.gt.as_slice())).collect();
        let hoi = hoi_ap_sequences(&seqs, cfg.box_iou_match).map_err(|e| e.to_string())?;
        let fps = corpus.videos[0].entry.fps;
        if corpus.videos.iter().any(|v| v.entry.fps != fps) {
            return Err("point-level AP needs a uniform frame rate across videos".to_string());
        }
        let points: Vec<PointSequence<'_>> =
            runs.iter().map(|r| PointSequence { predictions: &r.predictions, gt_frames: &r.contacts }).collect();
        let pap = p_ap_sequences(&points, &cfg.pap_thresholds(fps));
        Ok((runs, hoi, pap))
    });
    match scored {
        Ok((runs, hoi, pap)) => {
            result.hoi = Some(hoi);
            result.p_ap = Some(pap);
            result.od_invocations = runs.iter().map(|r| r.od_invocations).sum();
            result.evaluated_invocations = runs.iter().map(|r| r.evaluated_invocations).sum();
            for (run, video) in runs.into_iter().zip(&corpus.videos) {
                events.extend(run.events.into_iter().map(|event| EventLine {
                    row: label.clone(),
                    video_id: video.entry.video_id.clone(),
                    event,
                }));
            }
        }
        Err(e) => {
            tracing::error!(row = %label, "row failed: {e}");
            result.error = Some(e);
        }
    }
    let timing = StageTimingSummary {
        label,
        frames: acc.frames,
        od_frames: acc.od_frames,
        mean_recognizer_s: mean(acc.recognizer, acc.frames),
        mean_detector_s: mean(acc.detector, acc.od_frames),
        mean_frame_s: mean(acc.total, acc.frames),
    };
    RowOutput { result, timing, events }
}

pub fn evaluate(cfg: &ExperimentConfig, corpus: &Corpus) -> Evaluation {
    let outputs: Vec<RowOutput> = rows(cfg).par_iter().map(|row| evaluate_row(cfg, corpus, row)).collect();
    let mut report = ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        corpus: corpus.checksum(),
        seed: cfg.seed,
        box_iou_match: cfg.box_iou_match,
        rows: Vec::with_capacity(outputs.len()),
    };
    let mut timings = TimingReport { rows: Vec::with_capacity(outputs.len()) };
    let mut events = Vec::new();
    for o in outputs {
        report.rows.push(o.result);
        timings.rows.push(o.timing);
        events.extend(o.events);
    }
    Evaluation { report, timings, events }
}

/// Threshold tables per trigger, then method and p-AP tables at the first
/// threshold.
pub fn render_tables(report: &ExperimentReport, timings: Option<&TimingReport>) -> String {
    let mut out = String::new();
    let mut triggers: Vec<TriggerMode> = Vec::new();
    for r in &report.rows {
        if !triggers.contains(&r.trigger) {
            triggers.push(r.trigger);
        }
    }
    for t in &triggers {
        let rows: Vec<RowResult> = report.rows.iter().filter(|r| r.trigger == *t).cloned().collect();
        let _ = writeln!(out, "Association threshold sweep ({})\n{}", t.label(), render_threshold_table(&rows));
    }
    if let Some(first) = report.rows.first().map(|r| r.iou_threshold) {
        let rows: Vec<RowResult> = report.rows.iter().filter(|r| r.iou_threshold == first).cloned().collect();
        let _ = writeln!(out, "Trigger comparison (iou={first})\n{}", render_method_table(&rows, timings));
        let pap = render_pap_table(&rows);
        if !pap.is_empty() {
            let _ = writeln!(out, "Point-level AP\n{pap}");
        }
    }
    out
}

fn json_file<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    std::fs::write(path, bytes)
}

pub fn write_outputs(dir: &Path, eval: &Evaluation) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    json_file(&dir.join(RESULTS_FILE), &eval.report)?;
    json_file(&dir.join(TIMINGS_FILE), &eval.timings)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(EVENTS_FILE))?);
    for e in &eval.events {
        serde_json::to_writer(&mut w, e).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    std::fs::write(dir.join(TABLES_FILE), render_tables(&eval.report, Some(&eval.timings)))
}
