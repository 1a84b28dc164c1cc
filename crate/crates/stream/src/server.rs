use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::extract::{DefaultBodyLimit, Multipart, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tokio::sync::oneshot;

use egohoi_core::CascadeEngine;

use crate::config::ServiceConfig;
use crate::factory::{BackendFactory, OpenError};
use crate::pipeline::{IngestItem, ModelMsg, Pipeline, PipelineConfig, SessionRuntime, SessionState};
use crate::wire::{BatchAck, BatchMeta, ErrorBody, EventsResponse, Health, SessionInfo, SessionRequest, FRAME_PART, META_PART};

struct AppState {
    cfg: ServiceConfig,
    factory: Arc<dyn BackendFactory>,
    sessions: Mutex<HashMap<u64, Arc<SessionState>>>,
    next_session: AtomicU64,
    pipeline: Mutex<Pipeline>,
}

impl AppState {
    fn session(&self, id: u64) -> Result<Arc<SessionState>, ApiError> {
        self.sessions
            .lock()
            .expect("sessions lock")
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id}")))
    }
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn unavailable() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "service is shutting down")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

async fn open_session(
    State(app): State<Arc<AppState>>,
    Json(req): Json<SessionRequest>,
) -> Result<Json<SessionInfo>, ApiError> {
    let factory = Arc::clone(&app.factory);
    let opened = tokio::task::spawn_blocking(move || factory.open(&req))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| match e {
            OpenError::UnknownVideo(_) => ApiError::new(StatusCode::NOT_FOUND, e.to_string()),
            OpenError::Invalid(_) => ApiError::bad_request(e.to_string()),
            OpenError::Backend(_) => ApiError::new(StatusCode::BAD_GATEWAY, e.to_string()),
        })?;
    let engine = CascadeEngine::new(app.cfg.cascade, opened.geometry)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let id = app.next_session.fetch_add(1, Ordering::SeqCst);
    let info = SessionInfo {
        session_id: id,
        video_id: opened.video_id,
        fps: opened.fps,
        width: opened.geometry.width,
        height: opened.geometry.height,
        max_batch_frames: app.cfg.max_batch_frames,
        window_frames: app.cfg.cascade.window_frames,
        iou_threshold: app.cfg.cascade.association.iou_threshold,
    };
    let session = Arc::new(SessionState::new(info.clone(), opened.geometry));
    let runtime = Box::new(SessionRuntime { engine, recognizer: opened.recognizer, detector: opened.detector });
    let tx = app.pipeline.lock().expect("pipeline lock").model_tx.clone().ok_or_else(ApiError::unavailable)?;
    let msg = ModelMsg::Open { session: Arc::clone(&session), runtime };
    tokio::task::spawn_blocking(move || tx.send(msg))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|_| ApiError::unavailable())?;
    app.sessions.lock().expect("sessions lock").insert(id, session);
    tracing::info!(session = id, video = ?info.video_id, "session opened");
    Ok(Json(info))
}

async fn read_batch(mut mp: Multipart) -> Result<(BatchMeta, Vec<Arc<[u8]>>), ApiError> {
    let bad = |e: axum::extract::multipart::MultipartError| ApiError::bad_request(format!("multipart: {e}"));
    let first = mp.next_field().await.map_err(bad)?.ok_or_else(|| ApiError::bad_request("empty body"))?;
    if first.name() != Some(META_PART) {
        return Err(ApiError::bad_request(format!("first part must be {META_PART:?}")));
    }
    let meta: BatchMeta = serde_json::from_slice(&first.bytes().await.map_err(bad)?)
        .map_err(|e| ApiError::bad_request(format!("meta: {e}")))?;
    let mut frames = Vec::with_capacity(meta.frames.len());
    while let Some(field) = mp.next_field().await.map_err(bad)? {
        if field.name() != Some(FRAME_PART) {
            return Err(ApiError::bad_request(format!("unexpected part {:?}", field.name())));
        }
        frames.push(Arc::from(field.bytes().await.map_err(bad)?.to_vec()));
    }
    Ok((meta, frames))
}

async fn ingest(State(app): State<Arc<AppState>>, mp: Multipart) -> Result<Json<BatchAck>, ApiError> {
    let received = Instant::now();
    let (meta, frames) = read_batch(mp).await?;
    let session = app.session(meta.session_id)?;
    if meta.frames.len() > app.cfg.max_batch_frames {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("batch of {} frames exceeds {}", meta.frames.len(), app.cfg.max_batch_frames),
        ));
    }
    let mut order = session.order.lock().await;
    if meta.batch_index != order.next_batch {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("batch_index {} rejected, expected {}", meta.batch_index, order.next_batch),
        ));
    }
    let mut last = order.last_frame;
    for f in &meta.frames {
        if last.is_some_and(|l| f.frame_index <= l) {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("frame {} does not follow frame {}", f.frame_index, last.unwrap_or_default()),
            ));
        }
        last = Some(f.frame_index);
    }
    if meta.frames.is_empty() || frames.len() != meta.frames.len() {
        return Err(ApiError::bad_request(format!(
            "meta lists {} frames, body carries {} frame parts",
            meta.frames.len(),
            frames.len()
        )));
    }
    let accepted = frames.len();
    let tx = app.pipeline.lock().expect("pipeline lock").ingest_tx.clone().ok_or_else(ApiError::unavailable)?;
    let item = IngestItem { session: Arc::clone(&session), frames: meta.frames.iter().copied().zip(frames).collect(), received };
    // blocks while the queues are full: backpressure reaches the client here
    tokio::task::spawn_blocking(move || tx.send(item))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|_| ApiError::unavailable())?;
    order.next_batch += 1;
    order.last_frame = last;
    drop(order);

    let feedback = {
        let mut log = session.feedback.lock().expect("feedback lock");
        let out = log.records[log.acked..].to_vec();
        log.acked = log.records.len();
        out
    };
    Ok(Json(BatchAck { session_id: meta.session_id, batch_index: meta.batch_index, accepted, feedback }))
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    session: u64,
    #[serde(default)]
    cursor: u64,
    /// Long-poll: wait up to this long for records past `cursor`.
    #[serde(default)]
    wait_ms: u64,
}

async fn poll_events(
    State(app): State<Arc<AppState>>,
    Query(q): Query<EventsQuery>,
) -> Result<Json<EventsResponse>, ApiError> {
    let session = app.session(q.session)?;
    let deadline = tokio::time::Instant::now() + Duration::from_millis(q.wait_ms.min(60_000));
    loop {
        let notified = session.notify.notified();
        tokio::pin!(notified);
        notified.as_mut().enable();
        {
            let log = session.feedback.lock().expect("feedback lock");
            let len = log.records.len() as u64;
            if q.cursor > len {
                return Err(ApiError::bad_request(format!("cursor {} is past the end ({len})", q.cursor)));
            }
            if q.cursor < len || tokio::time::Instant::now() >= deadline {
                let records = log.records[q.cursor as usize..].to_vec();
                let degraded = session.degraded.lock().expect("degraded lock").clone();
                return Ok(Json(EventsResponse { session_id: q.session, records, next_cursor: len, degraded }));
            }
        }
        let _ = tokio::time::timeout_at(deadline, notified).await;
    }
}

async fn health(State(app): State<Arc<AppState>>) -> Json<Health> {
    let pipeline = app.pipeline.lock().expect("pipeline lock");
    Json(Health {
        status: "ok".into(),
        sessions: app.sessions.lock().expect("sessions lock").len(),
        model_queue_len: pipeline.model_rx_len.len(),
        visualization_dropped: pipeline.tap_stats.dropped.load(Ordering::Relaxed),
        visualization_written: pipeline.tap_stats.written.load(Ordering::Relaxed),
    })
}

fn router(app: Arc<AppState>) -> Router {
    let limit = app.cfg.max_body_bytes;
    Router::new()
        .route("/session", post(open_session))
        .route("/batch", post(ingest).layer(DefaultBodyLimit::max(limit)))
        .route("/events", get(poll_events))
        .route("/health", get(health))
        .with_state(app)
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid service config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Counters reported when the service stops.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ServiceStats {
    pub sessions: usize,
    pub visualization_written: u64,
    pub visualization_dropped: u64,
}

/// A running server: HTTP on a tokio runtime thread, pipeline on its own
/// threads.
pub struct Service {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    server: Option<JoinHandle<std::io::Result<()>>>,
    app: Arc<AppState>,
}

impl Service {
    pub fn start(cfg: ServiceConfig, factory: Arc<dyn BackendFactory>, bind: SocketAddr) -> Result<Self, ServiceError> {
        cfg.validate().map_err(ServiceError::Config)?;
        let pipeline = Pipeline::start(PipelineConfig {
            ingest_capacity: cfg.ingest_capacity,
            model_capacity: cfg.model_capacity,
            visualization_capacity: cfg.visualization_capacity,
            group_size: cfg.group_size,
            linger: cfg.linger(),
            tap_dir: cfg.tap_dir.clone(),
        });
        let app = Arc::new(AppState {
            cfg,
            factory,
            sessions: Mutex::default(),
            next_session: AtomicU64::new(1),
            pipeline: Mutex::new(pipeline),
        });
        let listener = std::net::TcpListener::bind(bind)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let (stop_tx, stop_rx) = oneshot::channel::<()>();
        let router = router(Arc::clone(&app));
        let server = std::thread::Builder::new().name("http".into()).spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener)?;
                let shutdown = async move {
                    tokio::select! {
                        _ = stop_rx => {}
                        _ = tokio::signal::ctrl_c() => tracing::info!("interrupt received, shutting down"),
                    }
                };
                axum::serve(listener, router).with_graceful_shutdown(shutdown).await
            })
        })?;
        tracing::info!(%addr, "listening");
        Ok(Self { addr, stop: Some(stop_tx), server: Some(server), app })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server exits on its own (interrupt), then drains.
    pub fn wait(mut self) -> Result<ServiceStats, ServiceError> {
        if let Some(h) = self.server.take() {
            h.join().expect("http thread panicked")?;
        }
        Ok(self.finish())
    }

    /// Stops accepting requests, drains the model queue, then closes the tap.
    pub fn shutdown(mut self) -> Result<ServiceStats, ServiceError> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(h) = self.server.take() {
            h.join().expect("http thread panicked")?;
        }
        Ok(self.finish())
    }

    fn finish(&mut self) -> ServiceStats {
        let mut p = self.app.pipeline.lock().expect("pipeline lock");
        p.shutdown();
        let sessions: Vec<Arc<SessionState>> = self.app.sessions.lock().expect("sessions lock").values().cloned().collect();
        for s in &sessions {
            s.notify.notify_waiters();
        }
        ServiceStats {
            sessions: sessions.len(),
            visualization_written: p.tap_stats.written.load(Ordering::Relaxed),
            visualization_dropped: p.tap_stats.dropped.load(Ordering::Relaxed),
        }
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(h) = self.server.take() {
            let _ = h.join();
        }
        self.finish();
    }
}
