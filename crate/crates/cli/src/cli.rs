//! Subcommand definitions and their implementations.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use thiserror::Error;

use egohoi_core::backends::{BackendSetup, BackendSpec, ExternalOptions, NoiseModel, RecognizerNoise};
use egohoi_core::dataset::{load_corpus, synth_corpus, SynthParams};
use egohoi_core::metrics::report::{ExperimentReport, TimingReport};
use egohoi_core::overlay::{event_matches_gt, render};
use egohoi_core::{DatasetError, InteractionEvent};
use egohoi_stream::{stream_video, ClientError, CorpusFactory, ReplayOptions, Service, ServiceConfig, ServiceError};

use crate::config::{ConfigError, ExperimentConfig, ExperimentFile};
use crate::harness::{self, EventLine};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("corpus: {0}")]
    Corpus(String),
    #[error("backend: {0}")]
    Backend(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Corpus(_) => 3,
            CliError::Backend(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Corpus(e.to_string())
    }
}

fn io(context: &str) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Other(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "egohoi", version, about = "Cascaded egocentric hand-object interaction detection")]
pub struct Cli {
    /// Emit logs as JSON lines instead of text. Log level comes from RUST_LOG.
    #[arg(long, global = true)]
    pub log_json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the offline evaluation sweep and write result files.
    Evaluate(EvaluateArgs),
    /// Print tables from an evaluation output directory, optionally with overlay frames.
    Report(ReportArgs),
    /// Serve the streaming HTTP pipeline.
    Serve(ServeArgs),
    /// Stream one corpus video to a running server at capture speed.
    Replay(ReplayArgs),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// TOML experiment file. Keys present in the file override flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus directory.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Recognizer backend: oracle, scripted or external:<tcp://host:port|cmd:program args>.
    #[arg(long)]
    pub recognizer: Option<String>,
    /// Detector backend, same forms as --recognizer.
    #[arg(long)]
    pub detector: Option<String>,
    /// Association IoU thresholds, ascending, comma separated [default: 0.01].
    #[arg(long, value_delimiter = ',')]
    pub iou_threshold: Option<Vec<f64>>,
    /// Triggers: oracle, or a window length in frames, comma separated [default: oracle,30,60].
    #[arg(long, value_delimiter = ',')]
    pub window: Option<Vec<String>>,
    /// Point-level AP thresholds in seconds, ascending, comma separated [default: 1..10].
    #[arg(long, value_delimiter = ',')]
    pub pap_seconds: Option<Vec<f64>>,
    /// Box IoU needed for a predicted hand or object to match ground truth [default: 0.5].
    #[arg(long)]
    pub box_iou_match: Option<f64>,
    /// Root seed for every noise model [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: results].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel rows (0 uses all cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory written by `evaluate`.
    #[arg(long)]
    pub results: PathBuf,
    /// Write annotated contact frames here. Requires --corpus.
    #[arg(long, requires = "corpus")]
    pub overlays: Option<PathBuf>,
    /// Corpus the results were computed on.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Row label to draw [default: first row without error].
    #[arg(long)]
    pub row: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML service file. Keys present in the file override flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus whose videos sessions may name.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Recognizer backend [default: scripted].
    #[arg(long)]
    pub recognizer: Option<String>,
    /// Detector backend [default: scripted].
    #[arg(long)]
    pub detector: Option<String>,
    /// Trigger window in frames [default: 30].
    #[arg(long)]
    pub window: Option<u64>,
    /// Association IoU threshold [default: 0.01].
    #[arg(long)]
    pub iou_threshold: Option<f64>,
    /// Directory for annotated frame dumps, or `none`.
    #[arg(long)]
    pub tap: Option<String>,
    /// Listen address [default: 127.0.0.1:8080].
    #[arg(long)]
    pub bind: Option<SocketAddr>,
    /// Root seed for scripted noise [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub video: String,
    /// Playback speed; 1.0 is real time.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    /// Base URL of a running server.
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    pub endpoint: String,
    /// Frames per batch, capped by the server.
    #[arg(long, default_value_t = 60)]
    pub batch_frames: usize,
    /// Seconds to wait for outstanding feedback after the last batch.
    #[arg(long, default_value_t = 30.0)]
    pub drain_timeout: f64,
    /// Write received events as JSON lines.
    #[arg(long)]
    pub events_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output corpus directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub videos: usize,
    /// Frames per video.
    #[arg(long, default_value_t = 100)]
    pub frames: u64,
    /// Contact points per video.
    #[arg(long, default_value_t = 4)]
    pub contacts: usize,
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    /// Also render JPEG frames.
    #[arg(long)]
    pub images: bool,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
        Command::Serve(a) => serve(a),
        Command::Replay(a) => replay(a),
        Command::Synth(a) => synth(a),
    }
}

pub fn experiment_config(a: &EvaluateArgs) -> Result<ExperimentConfig, CliError> {
    let flags = ExperimentFile {
        corpus: a.corpus.clone(),
        output: a.out.clone(),
        seed: a.seed,
        recognizer: a.recognizer.clone(),
        detector: a.detector.clone(),
        iou_thresholds: a.iou_threshold.clone(),
        triggers: a.window.clone(),
        pap_thresholds_s: a.pap_seconds.clone(),
        box_iou_match: a.box_iou_match,
        ..Default::default()
    };
    let merged = match &a.config {
        Some(p) => ExperimentFile::load(p)?.or(flags),
        None => flags,
    };
    Ok(ExperimentConfig::try_from(merged)?)
}

fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let cfg = experiment_config(&a)?;
    let corpus = load_corpus(&cfg.corpus)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.threads)
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?;
    let eval = pool.install(|| harness::evaluate(&cfg, &corpus));
    harness::write_outputs(&cfg.output, &eval).map_err(io("writing results"))?;
    print!("{}", harness::render_tables(&eval.report, Some(&eval.timings)));
    let failed: Vec<String> = eval.failed_rows().map(|r| format!("{}: {}", r.label, r.error.as_deref().unwrap_or(""))).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Backend(format!("{} row(s) failed\n{}", failed.len(), failed.join("\n"))))
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn sanitize(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

fn report(a: ReportArgs) -> Result<(), CliError> {
    let results: ExperimentReport = read_json(&a.results.join(harness::RESULTS_FILE))?;
    let timings_path = a.results.join(harness::TIMINGS_FILE);
    let timings: Option<TimingReport> = if timings_path.exists() { Some(read_json(&timings_path)?) } else { None };
    print!("{}", harness::render_tables(&results, timings.as_ref()));

    let (Some(out), Some(corpus_dir)) = (&a.overlays, &a.corpus) else {
        return Ok(());
    };
    let corpus = load_corpus(corpus_dir)?;
    if corpus.checksum() != results.corpus {
        return Err(CliError::Corpus(format!("{} is not the corpus these results were computed on", corpus_dir.display())));
    }
    let row = match &a.row {
        Some(r) => results.rows.iter().find(|x| &x.label == r).ok_or_else(|| CliError::Config(format!("no row {r:?}")))?,
        None => results.rows.iter().find(|x| x.error.is_none()).ok_or_else(|| CliError::Config("every row failed".into()))?,
    };
    let events_path = a.results.join(harness::EVENTS_FILE);
    let text = std::fs::read_to_string(&events_path).map_err(|e| CliError::Config(format!("{}: {e}", events_path.display())))?;
    let mut events: Vec<EventLine> = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let e: EventLine = serde_json::from_str(line).map_err(|e| CliError::Config(format!("{}: {e}", events_path.display())))?;
        if e.row == row.label {
            events.push(e);
        }
    }
    let dir = out.join(sanitize(&row.label));
    let (mut ok, mut total) = (0usize, 0usize);
    for video in &corpus.videos {
        let vdir = dir.join(&video.entry.video_id);
        std::fs::create_dir_all(&vdir).map_err(io("creating overlay directory"))?;
        for gt in video.contact_point_gt() {
            let event: Option<&InteractionEvent> = events
                .iter()
                .find(|e| e.video_id == video.entry.video_id && e.event.frame_index == gt.frame_index)
                .map(|e| &e.event);
            let verdict = event.is_some_and(|e| event_matches_gt(e, &gt, results.box_iou_match));
            let pixels = match video.entry.frame_path(gt.frame_index) {
                Some(rel) => Some(std::fs::read(corpus.root.join(rel)).map_err(|e| CliError::Corpus(e.to_string()))?),
                None => None,
            };
            let jpeg = render(pixels.as_deref(), video.entry.geometry(), event, Some(verdict))
                .map_err(|e| CliError::Corpus(format!("video {} frame {}: {e}", video.entry.video_id, gt.frame_index)))?;
            std::fs::write(vdir.join(format!("{:06}.jpg", gt.frame_index)), jpeg).map_err(io("writing overlay"))?;
            total += 1;
            ok += usize::from(verdict);
        }
    }
    println!("{total} overlay frames for {} in {} ({ok} successes)", row.label, dir.display());
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServeFile {
    corpus: Option<PathBuf>,
    recognizer: Option<String>,
    detector: Option<String>,
    bind: Option<SocketAddr>,
    seed: Option<u64>,
    recognizer_noise: Option<RecognizerNoise>,
    detector_noise: Option<NoiseModel>,
    external_timeout_ms: Option<u64>,
    taxonomy: Option<Vec<String>>,
    service: Option<toml::Table>,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Service settings from flags, with the file's `[service]` table laid over
/// them key by key.
pub fn service_config(a: &ServeArgs, file_service: Option<toml::Table>) -> Result<ServiceConfig, CliError> {
    let mut cfg = ServiceConfig::default();
    if let Some(w) = a.window {
        cfg.cascade.window_frames = w;
    }
    if let Some(t) = a.iou_threshold {
        cfg.cascade.association.iou_threshold = t;
    }
    match a.tap.as_deref() {
        None | Some("none") => {}
        Some(dir) => cfg.tap_dir = Some(PathBuf::from(dir)),
    }
    if let Some(over) = file_service {
        let mut base = toml::Table::try_from(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
        merge(&mut base, over);
        cfg = base.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    }
    cfg.validate().map_err(CliError::Config)?;
    Ok(cfg)
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let file: ServeFile = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            let mut f: ServeFile = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            let base = p.parent().unwrap_or(Path::new("."));
            if let Some(c) = f.corpus.as_mut().filter(|c| c.is_relative()) {
                *c = base.join(&*c);
            }
            f
        }
        None => ServeFile::default(),
    };
    let cfg = service_config(&a, file.service)?;
    let spec = |s: Option<String>| -> Result<BackendSpec, CliError> {
        s.as_deref().unwrap_or("scripted").parse().map_err(|e: egohoi_core::BackendError| CliError::Config(e.to_string()))
    };
    let recognizer_noise = file.recognizer_noise.unwrap_or_default();
    let detector_noise = file.detector_noise.unwrap_or_default();
    recognizer_noise.validate().map_err(|e| CliError::Config(e.to_string()))?;
    detector_noise.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let setup = BackendSetup {
        recognizer: Some(spec(file.recognizer.or(a.recognizer.clone()))?),
        detector: Some(spec(file.detector.or(a.detector.clone()))?),
        recognizer_noise,
        detector_noise,
        external: ExternalOptions {
            timeout: Duration::from_millis(file.external_timeout_ms.unwrap_or(5000)),
            taxonomy: file.taxonomy.unwrap_or_default(),
            decision_threshold: cfg.cascade.decision_threshold,
        },
        seed: file.seed.or(a.seed).unwrap_or(0),
    };
    let corpus = match file.corpus.or(a.corpus.clone()) {
        Some(dir) => Some(Arc::new(load_corpus(dir)?)),
        None => None,
    };
    let bind = file.bind.or(a.bind).unwrap_or_else(|| SocketAddr::from(([127, 0, 0, 1], 8080)));
    let service = Service::start(cfg, Arc::new(CorpusFactory::new(corpus, setup)), bind).map_err(|e| match e {
        ServiceError::Config(m) => CliError::Config(m),
        other => CliError::Other(other.to_string()),
    })?;
    println!("listening on {}", service.base_url());
    let stats = service.wait().map_err(|e| CliError::Other(e.to_string()))?;
    println!(
        "stopped: {} sessions, {} visualization frames written, {} dropped",
        stats.sessions, stats.visualization_written, stats.visualization_dropped
    );
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<(), CliError> {
    if a.speed.is_nan() || a.speed <= 0.0 {
        return Err(CliError::Config(format!("speed must be positive, got {}", a.speed)));
    }
    if !(a.drain_timeout.is_finite() && a.drain_timeout >= 0.0) {
        return Err(CliError::Config(format!("drain timeout must be non-negative, got {}", a.drain_timeout)));
    }
    let corpus = load_corpus(&a.corpus)?;
    corpus.video(&a.video)?;
    let opts = ReplayOptions { speed: a.speed, batch_frames: a.batch_frames, drain_timeout: Duration::from_secs_f64(a.drain_timeout) };
    let run = stream_video(&a.endpoint, &corpus, &a.video, &opts).map_err(|e| match e {
        ClientError::Dataset(d) => CliError::Corpus(d.to_string()),
        other => CliError::Backend(other.to_string()),
    })?;
    let events = run.events();
    if let Some(path) = &a.events_out {
        let mut text = String::new();
        for e in &events {
            text.push_str(&serde_json::to_string(e).expect("serializable"));
            text.push('\n');
        }
        std::fs::write(path, text).map_err(io("writing events"))?;
    }
    let errors = run.errors();
    let summary = serde_json::json!({
        "session_id": run.session.session_id,
        "video_id": a.video,
        "frames_sent": run.frames_sent,
        "frames_with_feedback": run.frames_with_feedback(),
        "batches": run.batches,
        "events": events.len(),
        "wall_s": run.wall.as_secs_f64(),
        "mean_pipeline_s": run.mean_total_s(),
        "errors": errors,
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
    if errors.is_empty() {
        Ok(())
    } else {
        Err(CliError::Backend(format!("{} frames reported backend errors", errors.len())))
    }
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let params = SynthParams {
        videos: a.videos,
        frames_per_video: a.frames,
        fps: a.fps,
        contacts_per_video: a.contacts,
        images: a.images,
        ..Default::default()
    };
    let corpus = synth_corpus(&params, a.seed, &a.out)?;
    println!(
        "{} videos, {} frames, {} contact points, checksum {}",
        corpus.videos.len(),
        corpus.total_frames(),
        corpus.total_contact_points(),
        corpus.checksum()
    );
    Ok(())
}

