//! HTTP payloads.
//!
//! `POST /batch` takes a `multipart/form-data` body:
//!
//! ```text
//! --<boundary>\r\n
//! Content-Disposition: form-data; name="meta"\r\n
//! Content-Type: application/json\r\n
//! \r\n
//! {"session_id":1,"batch_index":0,"frames":[{"frame_index":0,"timestamp":0.0},...]}\r\n
//! --<boundary>\r\n
//! Content-Disposition: form-data; name="frame"; filename="0"\r\n
//! Content-Type: image/jpeg\r\n
//! \r\n
//! <encoded image bytes, possibly empty>\r\n
//! --<boundary>\r\n
//! ... one "frame" part per entry of meta.frames, in the same order ...
//! --<boundary>--\r\n
//! ```
//!
//! The `meta` part comes first. An empty frame part is an annotation-only
//! tick.

use serde::{Deserialize, Serialize};

use egohoi_core::{InteractionEvent, TriggerDecision};

pub const META_PART: &str = "meta";
pub const FRAME_PART: &str = "frame";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionRequest {
    /// Corpus video whose backends (oracle, scripted) the session uses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_id: Option<String>,
    /// Stream properties, required when no video is named.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: u64,
    pub video_id: Option<String>,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub max_batch_frames: usize,
    pub window_frames: u64,
    pub iou_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub frame_index: u64,
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMeta {
    pub session_id: u64,
    pub batch_index: u64,
    pub frames: Vec<FrameMeta>,
}

/// Server-side time spent on one frame, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameTiming {
    /// Request receipt to model-queue entry.
    pub ingest_s: f64,
    /// Model-queue entry to the start of processing.
    pub queue_wait_s: f64,
    /// Recognizer, trigger, detector and fusion.
    pub inference_s: f64,
    /// Request receipt to the end of processing.
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFeedback {
    pub frame_index: u64,
    pub decision: Option<TriggerDecision>,
    pub timing: FrameTiming,
    /// Set when the frame could not be processed.
    pub error: Option<String>,
}

/// Output of one model-worker group for one session. Immutable once emitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub session_id: u64,
    /// Position in the session's feedback log.
    pub seq: u64,
    pub events: Vec<InteractionEvent>,
    pub frames: Vec<FrameFeedback>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchAck {
    pub session_id: u64,
    pub batch_index: u64,
    pub accepted: usize,
    /// Feedback produced since the previous acknowledgement.
    pub feedback: Vec<FeedbackRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventsResponse {
    pub session_id: u64,
    pub records: Vec<FeedbackRecord>,
    pub next_cursor: u64,
    pub degraded: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub sessions: usize,
    pub model_queue_len: usize,
    pub visualization_dropped: u64,
    pub visualization_written: u64,
}
