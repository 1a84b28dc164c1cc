//! Queues and the three pipeline threads: duplicator, model worker and
//! visualization tap.
//!
//! ```text
//! ingest (HTTP) --[ingest queue]--> duplicator --[model queue]--> model worker --> feedback log
//!                                             \--[visualization queue, drop oldest]--> tap
//! ```

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam::channel::{self, Receiver, Sender};
use crossbeam::queue::ArrayQueue;
use tokio::sync::Notify;

use egohoi_core::{CascadeEngine, Detector, FrameInput, FramePayload, ImageGeometry, InteractionEvent, Recognizer};

use crate::wire::{FeedbackRecord, FrameFeedback, FrameMeta, FrameTiming, SessionInfo};

#[derive(Debug, Default)]
pub(crate) struct OrderState {
    pub next_batch: u64,
    pub last_frame: Option<u64>,
}

#[derive(Debug, Default)]
pub(crate) struct FeedbackLog {
    pub records: Vec<FeedbackRecord>,
    /// Records already returned on a batch acknowledgement.
    pub acked: usize,
}

/// Shared per-session state. The cascade itself lives in the model worker.
pub(crate) struct SessionState {
    pub info: SessionInfo,
    pub geometry: ImageGeometry,
    /// Held across validation and enqueue, serializing a session's batches.
    pub order: tokio::sync::Mutex<OrderState>,
    pub feedback: Mutex<FeedbackLog>,
    pub notify: Notify,
    pub degraded: Mutex<Option<String>>,
}

impl SessionState {
    pub fn new(info: SessionInfo, geometry: ImageGeometry) -> Self {
        Self {
            info,
            geometry,
            order: tokio::sync::Mutex::new(OrderState::default()),
            feedback: Mutex::new(FeedbackLog::default()),
            notify: Notify::new(),
            degraded: Mutex::new(None),
        }
    }

    fn append(&self, events: Vec<InteractionEvent>, frames: Vec<FrameFeedback>) {
        let mut log = self.feedback.lock().expect("feedback lock");
        let seq = log.records.len() as u64;
        log.records.push(FeedbackRecord { session_id: self.info.session_id, seq, events, frames });
        drop(log);
        self.notify.notify_waiters();
    }
}

pub(crate) struct IngestItem {
    pub session: Arc<SessionState>,
    pub frames: Vec<(FrameMeta, Arc<[u8]>)>,
    pub received: Instant,
}

pub(crate) struct SessionRuntime {
    pub engine: CascadeEngine,
    pub recognizer: Box<dyn Recognizer>,
    pub detector: Box<dyn Detector>,
}

pub(crate) enum ModelMsg {
    Open { session: Arc<SessionState>, runtime: Box<SessionRuntime> },
    Frame(ModelFrame),
}

pub(crate) struct ModelFrame {
    session: Arc<SessionState>,
    frame: FrameInput,
    received: Instant,
    enqueued: Instant,
}

struct VisItem {
    session_id: u64,
    frame_index: u64,
    geometry: ImageGeometry,
    bytes: Arc<[u8]>,
}

#[derive(Debug, Default)]
pub struct TapStats {
    pub written: AtomicU64,
    pub dropped: AtomicU64,
    pub disabled: AtomicBool,
}

type LatestEvents = Arc<Mutex<HashMap<u64, InteractionEvent>>>;

pub(crate) struct Pipeline {
    pub ingest_tx: Option<Sender<IngestItem>>,
    pub model_tx: Option<Sender<ModelMsg>>,
    pub model_rx_len: Receiver<ModelMsg>,
    pub tap_stats: Arc<TapStats>,
    stop_tap: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

pub(crate) struct PipelineConfig {
    pub ingest_capacity: usize,
    pub model_capacity: usize,
    pub visualization_capacity: usize,
    pub group_size: usize,
    pub linger: Duration,
    pub tap_dir: Option<PathBuf>,
}

impl Pipeline {
    pub fn start(cfg: PipelineConfig) -> Self {
        let (ingest_tx, ingest_rx) = channel::bounded::<IngestItem>(cfg.ingest_capacity);
        let (model_tx, model_rx) = channel::bounded::<ModelMsg>(cfg.model_capacity);
        let vis = Arc::new(ArrayQueue::<VisItem>::new(cfg.visualization_capacity));
        let tap_stats = Arc::new(TapStats::default());
        let latest: LatestEvents = Arc::default();
        let stop_tap = Arc::new(AtomicBool::new(false));
        let tap_enabled = cfg.tap_dir.is_some();

        let mut threads = Vec::new();
        {
            let model_tx = model_tx.clone();
            let vis = Arc::clone(&vis);
            let stats = Arc::clone(&tap_stats);
            threads.push(spawn("duplicator", move || duplicator(ingest_rx, model_tx, vis, stats, tap_enabled)));
        }
        {
            let rx = model_rx.clone();
            let latest = Arc::clone(&latest);
            let (group, linger) = (cfg.group_size, cfg.linger);
            threads.push(spawn("model-worker", move || model_worker(rx, group, linger, latest)));
        }
        if let Some(dir) = cfg.tap_dir {
            let vis = Arc::clone(&vis);
            let stats = Arc::clone(&tap_stats);
            let stop = Arc::clone(&stop_tap);
            threads.push(spawn("visual-tap", move || visual_tap(vis, dir, latest, stats, stop)));
        }
        Self {
            ingest_tx: Some(ingest_tx),
            model_tx: Some(model_tx),
            model_rx_len: model_rx,
            tap_stats,
            stop_tap,
            threads,
        }
    }

    /// Closes the queues, lets the model worker drain, then stops the tap.
    pub fn shutdown(&mut self) {
        self.ingest_tx.take();
        self.model_tx.take();
        let mut threads = std::mem::take(&mut self.threads);
        // duplicator and worker first, so the model path drains completely
        let tap = if threads.len() == 3 { threads.pop() } else { None };
        for t in threads {
            let _ = t.join();
        }
        self.stop_tap.store(true, Ordering::SeqCst);
        if let Some(t) = tap {
            let _ = t.join();
        }
    }
}

impl Drop for Pipeline {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn spawn(name: &str, f: impl FnOnce() + Send + 'static) -> JoinHandle<()> {
    std::thread::Builder::new().name(name.into()).spawn(f).expect("spawn pipeline thread")
}

fn duplicator(
    rx: Receiver<IngestItem>,
    model_tx: Sender<ModelMsg>,
    vis: Arc<ArrayQueue<VisItem>>,
    stats: Arc<TapStats>,
    tap_enabled: bool,
) {
    for item in rx {
        for (meta, bytes) in item.frames {
            if tap_enabled {
                let v = VisItem {
                    session_id: item.session.info.session_id,
                    frame_index: meta.frame_index,
                    geometry: item.session.geometry,
                    bytes: Arc::clone(&bytes),
                };
                if vis.force_push(v).is_some() {
                    stats.dropped.fetch_add(1, Ordering::Relaxed);
                }
            }
            let payload = if bytes.is_empty() { FramePayload::Tick } else { FramePayload::Encoded(bytes) };
            let msg = ModelMsg::Frame(ModelFrame {
                session: Arc::clone(&item.session),
                frame: FrameInput { frame_index: meta.frame_index, payload },
                received: item.received,
                enqueued: Instant::now(),
            });
            if model_tx.send(msg).is_err() {
                return;
            }
        }
    }
}

fn model_worker(rx: Receiver<ModelMsg>, group_size: usize, linger: Duration, latest: LatestEvents) {
    let mut runtimes: HashMap<u64, Box<SessionRuntime>> = HashMap::new();
    loop {
        let Ok(first) = rx.recv() else { return };
        let mut group = vec![first];
        let deadline = Instant::now() + linger;
        let is_frame = |m: &ModelMsg| matches!(m, ModelMsg::Frame(_));
        let mut frames = usize::from(is_frame(&group[0]));
        while frames < group_size {
            match rx.recv_deadline(deadline) {
                Ok(m) => {
                    frames += usize::from(is_frame(&m));
                    group.push(m);
                }
                Err(_) => break,
            }
        }
        process_group(group, &mut runtimes, &latest);
    }
}

struct Pending {
    session: Arc<SessionState>,
    events: Vec<InteractionEvent>,
    frames: Vec<FrameFeedback>,
}

fn process_group(group: Vec<ModelMsg>, runtimes: &mut HashMap<u64, Box<SessionRuntime>>, latest: &LatestEvents) {
    // one record per session per group, in first-seen order
    let mut pending: Vec<Pending> = Vec::new();
    let flush = |pending: &mut Vec<Pending>| {
        for p in pending.drain(..) {
            p.session.append(p.events, p.frames);
        }
    };
    for msg in group {
        match msg {
            ModelMsg::Open { session, runtime } => {
                runtimes.insert(session.info.session_id, runtime);
            }
            ModelMsg::Frame(f) => {
                let id = f.session.info.session_id;
                let started = Instant::now();
                let degraded = f.session.degraded.lock().expect("degraded lock").clone();
                let (decision, event, error) = match (degraded, runtimes.get_mut(&id)) {
                    (Some(reason), _) => (None, None, Some(format!("session degraded: {reason}"))),
                    (None, None) => (None, None, Some("session has no model runtime".to_string())),
                    (None, Some(rt)) => {
                        match rt.engine.process(&f.frame, rt.recognizer.as_mut(), rt.detector.as_mut()) {
                            Ok(out) => (Some(out.decision), out.event, None),
                            Err(e) => {
                                let reason = e.to_string();
                                tracing::warn!(session = id, frame = f.frame.frame_index, error = %reason, "session degraded");
                                *f.session.degraded.lock().expect("degraded lock") = Some(reason.clone());
                                (None, None, Some(reason))
                            }
                        }
                    }
                };
                let finished = Instant::now();
                let timing = FrameTiming {
                    ingest_s: (f.enqueued - f.received).as_secs_f64(),
                    queue_wait_s: (started - f.enqueued).as_secs_f64(),
                    inference_s: (finished - started).as_secs_f64(),
                    total_s: (finished - f.received).as_secs_f64(),
                };
                tracing::debug!(
                    session = id,
                    frame = f.frame.frame_index,
                    decision = ?decision,
                    ingest_s = timing.ingest_s,
                    queue_wait_s = timing.queue_wait_s,
                    inference_s = timing.inference_s,
                    total_s = timing.total_s,
                    "frame"
                );
                let idx = match pending.iter().position(|p| p.session.info.session_id == id) {
                    Some(i) => i,
                    None => {
                        pending.push(Pending { session: Arc::clone(&f.session), events: Vec::new(), frames: Vec::new() });
                        pending.len() - 1
                    }
                };
                let p = &mut pending[idx];
                if let Some(ev) = event {
                    latest.lock().expect("latest lock").insert(id, ev.clone());
                    p.events.push(ev);
                }
                p.frames.push(FrameFeedback { frame_index: f.frame.frame_index, decision, timing, error });
            }
        }
    }
    flush(&mut pending);
}

fn visual_tap(
    vis: Arc<ArrayQueue<VisItem>>,
    dir: PathBuf,
    latest: LatestEvents,
    stats: Arc<TapStats>,
    stop: Arc<AtomicBool>,
) {
    loop {
        let Some(item) = vis.pop() else {
            if stop.load(Ordering::SeqCst) {
                return;
            }
            std::thread::sleep(Duration::from_millis(2));
            continue;
        };
        if stats.disabled.load(Ordering::Relaxed) {
            continue;
        }
        let event = latest.lock().expect("latest lock").get(&item.session_id).cloned();
        let pixels = (!item.bytes.is_empty()).then_some(&item.bytes[..]);
        let out_dir = dir.join(format!("session-{}", item.session_id));
        let result = egohoi_core::overlay::render(pixels, item.geometry, event.as_ref(), None)
            .map_err(|e| e.to_string())
            .and_then(|jpeg| {
                std::fs::create_dir_all(&out_dir).map_err(|e| e.to_string())?;
                std::fs::write(out_dir.join(format!("{:06}.jpg", item.frame_index)), jpeg).map_err(|e| e.to_string())
            });
        match result {
            Ok(()) => {
                stats.written.fetch_add(1, Ordering::Relaxed);
            }
            Err(e) => {
                tracing::warn!(dir = %dir.display(), error = %e, "visualization tap disabled");
                stats.disabled.store(true, Ordering::Relaxed);
            }
        }
    }
}
