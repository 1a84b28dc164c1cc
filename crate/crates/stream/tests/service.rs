use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use egohoi_core::backends::{BackendKind, BackendSetup, BackendSpec, Delayed, OracleRecognizer};
use egohoi_core::dataset::load_corpus;
use egohoi_core::{
    run_offline, BackendError, CascadeConfig, Corpus, Detection, Detector, FrameInput, ImageGeometry, TriggerDecision,
};
use egohoi_stream::wire::{BatchMeta, FrameMeta, SessionRequest};
use egohoi_stream::{
    stream_video, BackendFactory, ClientError, CorpusFactory, OpenError, OpenedSession, ReplayOptions, Service,
    ServiceClient, ServiceConfig,
};

fn fixture() -> Arc<Corpus> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/corpus");
    Arc::new(load_corpus(root).unwrap())
}

fn setup() -> BackendSetup {
    BackendSetup::new(
        BackendSpec { kind: BackendKind::Oracle, endpoint: None },
        BackendSpec { kind: BackendKind::Scripted, endpoint: None },
    )
}

fn start(cfg: ServiceConfig, factory: Arc<dyn BackendFactory>) -> Service {
    Service::start(cfg, factory, "127.0.0.1:0".parse().unwrap()).unwrap()
}

fn corpus_service(cfg: ServiceConfig) -> Service {
    start(cfg, Arc::new(CorpusFactory::new(Some(fixture()), setup())))
}

fn meta(session: u64, batch: u64, frames: std::ops::Range<u64>) -> BatchMeta {
    BatchMeta {
        session_id: session,
        batch_index: batch,
        frames: frames.map(|f| FrameMeta { frame_index: f, timestamp: f as f64 / 30.0 }).collect(),
    }
}

fn ticks(m: &BatchMeta) -> Vec<Vec<u8>> {
    vec![Vec::new(); m.frames.len()]
}

fn status(r: Result<impl std::fmt::Debug, ClientError>) -> u16 {
    match r {
        Err(ClientError::Status { status, .. }) => status,
        other => panic!("expected an error status, got {other:?}"),
    }
}

/// Oracle recognizer slowed down, with a detector that returns nothing or
/// fails from a given frame on.
struct SlowFactory {
    delay: Duration,
    fail_from: Option<u64>,
}

struct TestDetector {
    fail_from: Option<u64>,
}

impl Detector for TestDetector {
    fn detect(&mut self, f: &FrameInput) -> Result<Vec<Detection>, BackendError> {
        match self.fail_from {
            Some(n) if f.frame_index >= n => Err(BackendError::Remote { frame: f.frame_index, message: "boom".into() }),
            _ => Ok(Vec::new()),
        }
    }
}

impl BackendFactory for SlowFactory {
    fn open(&self, _: &SessionRequest) -> Result<OpenedSession, OpenError> {
        Ok(OpenedSession {
            video_id: None,
            fps: 30.0,
            geometry: ImageGeometry::new(640, 480).unwrap(),
            recognizer: Box::new(Delayed::new(OracleRecognizer::from_contacts(0..1000, 1000), self.delay)),
            detector: Box::new(TestDetector { fail_from: self.fail_from }),
        })
    }
}

fn open(c: &ServiceClient) -> u64 {
    c.open_session(&SessionRequest::default()).unwrap().session_id
}

#[test]
fn first_batch_is_acked_before_processing() {
    let svc = start(ServiceConfig::default(), Arc::new(SlowFactory { delay: Duration::from_millis(20), fail_from: None }));
    let c = ServiceClient::new(svc.base_url()).unwrap();
    let s = open(&c);
    let m = meta(s, 0, 0..60);
    let ack = c.send_batch(&m, &ticks(&m)).unwrap();
    assert_eq!(ack.accepted, 60);
    assert!(ack.feedback.is_empty());
    svc.shutdown().unwrap();
}

#[test]
fn batch_validation_errors() {
    let svc = start(ServiceConfig::default(), Arc::new(SlowFactory { delay: Duration::ZERO, fail_from: None }));
    let c = ServiceClient::new(svc.base_url()).unwrap();
    let s = open(&c);
    let m = meta(s, 0, 0..10);
    c.send_batch(&m, &ticks(&m)).unwrap();

    // duplicate batch index: rejected, state unchanged
    let dup = meta(s, 0, 10..20);
    assert_eq!(status(c.send_batch(&dup, &ticks(&dup))), 409);
    // frames must keep increasing across batches
    let back = meta(s, 1, 5..15);
    assert_eq!(status(c.send_batch(&back, &ticks(&back))), 409);
    let unknown = meta(999, 0, 0..1);
    assert_eq!(status(c.send_batch(&unknown, &ticks(&unknown))), 404);
    let big = meta(s, 1, 10..71);
    assert_eq!(status(c.send_batch(&big, &ticks(&big))), 413);
    let short = meta(s, 1, 10..20);
    assert_eq!(status(c.send_batch(&short, &ticks(&short)[..3])), 400);

    let next = meta(s, 1, 10..20);
    assert_eq!(c.send_batch(&next, &ticks(&next)).unwrap().accepted, 10);

    let mut seen = 0;
    let deadline = Instant::now() + Duration::from_secs(10);
    while seen < 20 && Instant::now() < deadline {
        let r = c.poll(s, 0, Duration::from_millis(200)).unwrap();
        seen = r.records.iter().map(|r| r.frames.len()).sum::<usize>();
    }
    assert_eq!(seen, 20);
    assert_eq!(status(c.poll(s, 1000, Duration::ZERO)), 400);
    assert_eq!(status(c.poll(12345, 0, Duration::ZERO)), 404);
    svc.shutdown().unwrap();
}

fn offline_events(corpus: &Corpus, video: &str, cfg: CascadeConfig) -> (Vec<egohoi_core::InteractionEvent>, Vec<u64>) {
    let v = corpus.video(video).unwrap();
    let s = setup();
    let mut rec = s.build_recognizer(v).unwrap();
    let mut det = s.build_detector(v).unwrap();
    let frames = (0..v.entry.n_frames).map(|f| Ok::<_, std::convert::Infallible>(FrameInput::tick(f)));
    let run = run_offline(frames, &mut rec, &mut det, cfg, v.entry.geometry()).unwrap();
    let invoked = run.invoked_frames().collect();
    (run.events, invoked)
}

#[test]
fn online_matches_offline_on_fixture() {
    let corpus = fixture();
    let cfg = ServiceConfig { cascade: CascadeConfig { window_frames: 30, ..Default::default() }, ..Default::default() };
    let svc = corpus_service(cfg.clone());
    let opts = ReplayOptions { speed: f64::INFINITY, batch_frames: 45, ..Default::default() };
    for v in &corpus.videos {
        let id = &v.entry.video_id;
        let online = stream_video(&svc.base_url(), &corpus, id, &opts).unwrap();
        let (events, invoked) = offline_events(&corpus, id, cfg.cascade);
        assert_eq!(online.frames_sent, 100);
        assert_eq!(online.frames_with_feedback(), 100);
        assert_eq!(online.events(), events, "video {id}");
        let online_invoked: Vec<u64> = online
            .records
            .values()
            .flat_map(|r| &r.frames)
            .filter(|f| f.decision == Some(TriggerDecision::InvokeOd))
            .map(|f| f.frame_index)
            .collect();
        assert_eq!(online_invoked, invoked);
        assert!(online.errors().is_empty());
    }
    svc.shutdown().unwrap();
}

#[test]
fn concurrent_sessions_lose_no_frames() {
    let corpus = fixture();
    let cfg = ServiceConfig { model_capacity: 8, ingest_capacity: 1, ..Default::default() };
    let svc = corpus_service(cfg.clone());
    let base = svc.base_url();
    let handles: Vec<_> = corpus
        .videos
        .iter()
        .map(|v| {
            let (corpus, base, id) = (Arc::clone(&corpus), base.clone(), v.entry.video_id.clone());
            std::thread::spawn(move || {
                let opts = ReplayOptions { speed: f64::INFINITY, batch_frames: 7, ..Default::default() };
                (id.clone(), stream_video(&base, &corpus, &id, &opts).unwrap())
            })
        })
        .collect();
    for h in handles {
        let (id, run) = h.join().unwrap();
        let frames: Vec<u64> = run.records.values().flat_map(|r| &r.frames).map(|f| f.frame_index).collect();
        assert_eq!(frames, (0..100).collect::<Vec<_>>(), "video {id}");
        assert_eq!(run.events(), offline_events(&corpus, &id, cfg.cascade).0);
    }
    svc.shutdown().unwrap();
}

#[test]
fn full_model_queue_blocks_ingest() {
    let cfg = ServiceConfig { model_capacity: 4, ingest_capacity: 1, group_size: 2, ..Default::default() };
    let svc = start(cfg, Arc::new(SlowFactory { delay: Duration::from_millis(10), fail_from: None }));
    let c = ServiceClient::new(svc.base_url()).unwrap();
    let s = open(&c);
    let t = Instant::now();
    for b in 0..5u64 {
        let m = meta(s, b, b * 20..(b + 1) * 20);
        c.send_batch(&m, &ticks(&m)).unwrap();
    }
    // at most 2 + 4 + 20 + 20 frames fit in the worker, model queue,
    // duplicator and ingest queue; the rest wait on 10 ms recognizer calls
    assert!(t.elapsed() >= Duration::from_millis(400), "{:?}", t.elapsed());
    let mut frames = Vec::new();
    let deadline = Instant::now() + Duration::from_secs(10);
    while frames.len() < 100 && Instant::now() < deadline {
        let r = c.poll(s, 0, Duration::from_millis(500)).unwrap();
        frames = r.records.iter().flat_map(|r| &r.frames).map(|f| f.frame_index).collect();
    }
    assert_eq!(frames, (0..100).collect::<Vec<_>>());
    svc.shutdown().unwrap();
}

#[test]
fn backend_failure_degrades_session_without_losing_frames() {
    let svc = start(ServiceConfig::default(), Arc::new(SlowFactory { delay: Duration::ZERO, fail_from: Some(5) }));
    let c = ServiceClient::new(svc.base_url()).unwrap();
    let s = open(&c);
    let m = meta(s, 0, 0..20);
    c.send_batch(&m, &ticks(&m)).unwrap();
    let mut resp = c.poll(s, 0, Duration::from_secs(5)).unwrap();
    let deadline = Instant::now() + Duration::from_secs(10);
    while resp.records.iter().map(|r| r.frames.len()).sum::<usize>() < 20 && Instant::now() < deadline {
        resp = c.poll(s, 0, Duration::from_millis(200)).unwrap();
    }
    let frames: Vec<_> = resp.records.iter().flat_map(|r| r.frames.clone()).collect();
    assert_eq!(frames.len(), 20);
    assert!(frames[..5].iter().all(|f| f.error.is_none()));
    assert!(frames[5].error.as_deref().unwrap().contains("boom"));
    assert!(frames[6..].iter().all(|f| f.error.as_deref().unwrap().starts_with("session degraded")));
    assert!(resp.degraded.is_some());
    svc.shutdown().unwrap();
}

#[test]
fn overloaded_tap_does_not_change_feedback() {
    let corpus = fixture();
    let images = tempfile::tempdir().unwrap();
    let params = egohoi_core::dataset::SynthParams { videos: 1, frames_per_video: 90, images: true, ..Default::default() };
    let img_corpus = Arc::new(egohoi_core::dataset::synth_corpus(&params, 4, images.path()).unwrap());
    drop(corpus);

    let run = |tap: Option<&Path>| {
        let cfg = ServiceConfig { visualization_capacity: 1, tap_dir: tap.map(Path::to_path_buf), ..Default::default() };
        let svc = start(cfg, Arc::new(CorpusFactory::new(Some(Arc::clone(&img_corpus)), setup())));
        let opts = ReplayOptions { speed: f64::INFINITY, ..Default::default() };
        let out = stream_video(&svc.base_url(), &img_corpus, "v000", &opts).unwrap();
        let stats = svc.shutdown().unwrap();
        let decisions: Vec<_> = out.records.values().flat_map(|r| &r.frames).map(|f| (f.frame_index, f.decision)).collect();
        (out.events(), decisions, stats)
    };
    let dumps = tempfile::tempdir().unwrap();
    let (ev_off, dec_off, _) = run(None);
    let (ev_on, dec_on, stats) = run(Some(dumps.path()));
    assert_eq!(ev_off, ev_on);
    assert_eq!(dec_off, dec_on);
    assert!(stats.visualization_written > 0);
    assert!(stats.visualization_written + stats.visualization_dropped <= 90);
}

#[test]
fn unwritable_tap_is_disabled() {
    let file = tempfile::NamedTempFile::new().unwrap();
    // a regular file cannot hold the per-session directory
    let cfg = ServiceConfig { tap_dir: Some(file.path().to_path_buf()), ..Default::default() };
    let svc = corpus_service(cfg);
    let opts = ReplayOptions { speed: f64::INFINITY, ..Default::default() };
    let out = stream_video(&svc.base_url(), &fixture(), "v000", &opts).unwrap();
    assert_eq!(out.frames_with_feedback(), 100);
    let stats = svc.shutdown().unwrap();
    assert_eq!(stats.visualization_written, 0);
}

#[test]
fn session_errors() {
    let svc = corpus_service(ServiceConfig::default());
    let c = ServiceClient::new(svc.base_url()).unwrap();
    let unknown = SessionRequest { video_id: Some("nope".into()), ..Default::default() };
    assert_eq!(status(c.open_session(&unknown)), 404);
    assert_eq!(status(c.open_session(&SessionRequest::default())), 400);
    let info = c.open_session(&SessionRequest { video_id: Some("v001".into()), ..Default::default() }).unwrap();
    assert_eq!((info.width, info.height, info.fps), (640, 480, 30.0));
    svc.shutdown().unwrap();
}
