//! Device-side replay client: a capture thread paces frames from a corpus
//! video and the sending loop packs them into batches for `POST /batch`.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use crossbeam::channel;
use reqwest::blocking::multipart::{Form, Part};
use reqwest::blocking::Client;

use egohoi_core::dataset::{replay, ReplayFrame};
use egohoi_core::{Corpus, FramePayload, InteractionEvent};

use crate::wire::{BatchAck, BatchMeta, ErrorBody, EventsResponse, FeedbackRecord, FrameMeta, SessionInfo, SessionRequest, FRAME_PART, META_PART};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("server answered {status}: {message}")]
    Status { status: u16, message: String },
    #[error(transparent)]
    Dataset(#[from] egohoi_core::DatasetError),
    #[error("feedback for {missing} frames still outstanding after {after:?}")]
    Incomplete { missing: u64, after: Duration },
}

#[derive(Debug, Clone)]
pub struct ReplayOptions {
    pub speed: f64,
    pub batch_frames: usize,
    /// How long to wait for outstanding feedback after the last batch.
    pub drain_timeout: Duration,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self { speed: 1.0, batch_frames: 60, drain_timeout: Duration::from_secs(30) }
    }
}

#[derive(Debug, Clone)]
pub struct ClientRun {
    pub session: SessionInfo,
    /// Feedback records by sequence number, deduplicated.
    pub records: BTreeMap<u64, FeedbackRecord>,
    pub frames_sent: u64,
    pub batches: u64,
    /// First frame capture to the last feedback record.
    pub wall: Duration,
}

impl ClientRun {
    pub fn events(&self) -> Vec<InteractionEvent> {
        self.records.values().flat_map(|r| r.events.iter().cloned()).collect()
    }

    pub fn frames_with_feedback(&self) -> u64 {
        self.records.values().map(|r| r.frames.len() as u64).sum()
    }

    pub fn mean_total_s(&self) -> f64 {
        let (sum, n) = self
            .records
            .values()
            .flat_map(|r| &r.frames)
            .fold((0.0, 0u64), |(s, n), f| (s + f.timing.total_s, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    pub fn errors(&self) -> Vec<String> {
        self.records.values().flat_map(|r| &r.frames).filter_map(|f| f.error.clone()).collect()
    }
}

fn check(resp: reqwest::blocking::Response) -> Result<reqwest::blocking::Response, ClientError> {
    if resp.status().is_success() {
        return Ok(resp);
    }
    let status = resp.status().as_u16();
    let message = resp.json::<ErrorBody>().map(|b| b.error).unwrap_or_default();
    Err(ClientError::Status { status, message })
}

/// Thin HTTP client for the service.
pub struct ServiceClient {
    http: Client,
    base: String,
}

impl ServiceClient {
    pub fn new(base: impl Into<String>) -> Result<Self, ClientError> {
        let http = Client::builder().timeout(Duration::from_secs(120)).build()?;
        Ok(Self { http, base: base.into().trim_end_matches('/').to_string() })
    }

    pub fn open_session(&self, req: &SessionRequest) -> Result<SessionInfo, ClientError> {
        Ok(check(self.http.post(format!("{}/session", self.base)).json(req).send()?)?.json()?)
    }

    pub fn send_batch(&self, meta: &BatchMeta, frames: &[Vec<u8>]) -> Result<BatchAck, ClientError> {
        let mut form = Form::new().part(
            META_PART,
            Part::bytes(serde_json::to_vec(meta).expect("serializable")).mime_str("application/json")?,
        );
        for (m, bytes) in meta.frames.iter().zip(frames) {
            let part = Part::bytes(bytes.clone()).file_name(m.frame_index.to_string()).mime_str("image/jpeg")?;
            form = form.part(FRAME_PART, part);
        }
        Ok(check(self.http.post(format!("{}/batch", self.base)).multipart(form).send()?)?.json()?)
    }

    pub fn poll(&self, session: u64, cursor: u64, wait: Duration) -> Result<EventsResponse, ClientError> {
        let url = format!("{}/events?session={session}&cursor={cursor}&wait_ms={}", self.base, wait.as_millis());
        Ok(check(self.http.get(url).send()?)?.json()?)
    }
}

fn payload_bytes(f: &ReplayFrame) -> Vec<u8> {
    match &f.payload {
        FramePayload::Tick => Vec::new(),
        FramePayload::Encoded(b) => b.to_vec(),
        FramePayload::Path(p) => std::fs::read(p).unwrap_or_default(),
    }
}

/// Streams one corpus video to the service and collects all feedback.
pub fn stream_video(base: &str, corpus: &Corpus, video_id: &str, opts: &ReplayOptions) -> Result<ClientRun, ClientError> {
    let client = ServiceClient::new(base)?;
    let session = client.open_session(&SessionRequest { video_id: Some(video_id.to_string()), ..Default::default() })?;
    let frames = replay(corpus, video_id, opts.speed)?;
    let batch_frames = opts.batch_frames.clamp(1, session.max_batch_frames);

    // capture thread: paced like a camera, never blocked by the network
    let (tx, rx) = channel::unbounded();
    let capture = std::thread::Builder::new()
        .name("capture".into())
        .spawn(move || {
            for f in frames {
                if tx.send(f).is_err() {
                    break;
                }
            }
        })
        .expect("spawn capture thread");

    let start = Instant::now();
    let mut records = BTreeMap::new();
    let mut frames_sent = 0u64;
    let mut batch_index = 0u64;
    let mut pending: Vec<ReplayFrame> = Vec::with_capacity(batch_frames);
    let mut flush = |pending: &mut Vec<ReplayFrame>, records: &mut BTreeMap<u64, FeedbackRecord>| -> Result<(), ClientError> {
        if pending.is_empty() {
            return Ok(());
        }
        let meta = BatchMeta {
            session_id: session.session_id,
            batch_index,
            frames: pending.iter().map(|f| FrameMeta { frame_index: f.frame_index, timestamp: f.timestamp }).collect(),
        };
        let bytes: Vec<Vec<u8>> = pending.iter().map(payload_bytes).collect();
        let ack = client.send_batch(&meta, &bytes)?;
        for r in ack.feedback {
            records.insert(r.seq, r);
        }
        frames_sent += pending.len() as u64;
        batch_index += 1;
        pending.clear();
        Ok(())
    };
    for f in rx {
        pending.push(f?);
        if pending.len() == batch_frames {
            flush(&mut pending, &mut records)?;
        }
    }
    flush(&mut pending, &mut records)?;
    capture.join().expect("capture thread panicked");

    let deadline = Instant::now() + opts.drain_timeout;
    loop {
        let have: u64 = records.values().map(|r: &FeedbackRecord| r.frames.len() as u64).sum();
        if have >= frames_sent {
            break;
        }
        let now = Instant::now();
        if now >= deadline {
            return Err(ClientError::Incomplete { missing: frames_sent - have, after: opts.drain_timeout });
        }
        let cursor = records.keys().next_back().map_or(0, |s| s + 1);
        let resp = client.poll(session.session_id, cursor, (deadline - now).min(Duration::from_secs(5)))?;
        for r in resp.records {
            records.insert(r.seq, r);
        }
    }
    Ok(ClientRun { session, records, frames_sent, batches: batch_index, wall: start.elapsed() })
}
