//! Inference backends behind the recognizer and detector contracts.
//!
//! Three families are provided:
//! - [`oracle`]: ground-truth driven, used for upper-bound experiments;
//! - [`scripted`]: replay of per-frame outputs with an optional seeded noise model;
//! - [`external`]: a lockstep bridge to a model running in another process,
//!   speaking the length-prefixed protocol in [`protocol`].

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cascade::ContactPrediction;
use crate::geometry::Detection;

pub mod delay;
pub mod external;
pub mod oracle;
pub mod protocol;
pub mod scripted;
pub mod spec;

pub use delay::Delayed;
pub use external::{Endpoint, ExternalDetector, ExternalOptions, ExternalRecognizer};
pub use oracle::{OracleDetector, OracleRecognizer};
pub use scripted::{derive_seed, BackendScript, NoiseModel, RecognizerNoise, ScriptedDetector, ScriptedRecognizer};
pub use spec::{BackendKind, BackendSetup, BackendSpec};

/// Pixel payload attached to a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FramePayload {
    /// Annotation-only mode: the frame carries no pixels.
    Tick,
    /// Encoded image bytes (JPEG/PNG), passed through untouched.
    Encoded(Arc<[u8]>),
    /// An image on disk that the backend may read itself.
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameInput {
    pub frame_index: u64,
    pub payload: FramePayload,
}

impl FrameInput {
    pub fn tick(frame_index: u64) -> Self {
        Self { frame_index, payload: FramePayload::Tick }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Recognizer,
    Detector,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Recognizer => "recognizer",
            Role::Detector => "detector",
        })
    }
}

/// Expected per-frame cost of a backend, used for timing accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatencyClass {
    Negligible,
    Bounded(Duration),
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("frame {frame} is outside the annotated range 0..{n_frames}")]
    FrameOutOfRange { frame: u64, n_frames: u64 },
    #[error("frame {0} is absent from the backend script")]
    MissingFrame(u64),
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("no response for frame {frame} within {after:?}")]
    Timeout { frame: u64, after: Duration },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("remote backend error for frame {frame}: {message}")]
    Remote { frame: u64, message: String },
    #[error(transparent)]
    Protocol(#[from] protocol::ProtocolError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid backend spec: {0}")]
    Spec(String),
}

/// Online contact recognizer: one prediction per fed frame, in feed order.
pub trait Recognizer: Send {
    fn feed(&mut self, frame: &FrameInput) -> Result<ContactPrediction, BackendError>;

    fn latency_class(&self) -> LatencyClass {
        LatencyClass::Negligible
    }
}

/// Hand and object detector.
pub trait Detector: Send {
    fn detect(&mut self, frame: &FrameInput) -> Result<Vec<Detection>, BackendError>;

    fn latency_class(&self) -> LatencyClass {
        LatencyClass::Negligible
    }
}

impl<R: Recognizer + ?Sized> Recognizer for Box<R> {
    fn feed(&mut self, frame: &FrameInput) -> Result<ContactPrediction, BackendError> {
        (**self).feed(frame)
    }

    fn latency_class(&self) -> LatencyClass {
        (**self).latency_class()
    }
}

impl<D: Detector + ?Sized> Detector for Box<D> {
    fn detect(&mut self, frame: &FrameInput) -> Result<Vec<Detection>, BackendError> {
        (**self).detect(frame)
    }

    fn latency_class(&self) -> LatencyClass {
        (**self).latency_class()
    }
}

/// Wraps a detector and counts `detect` calls. The counter handle can be
/// cloned out before the detector is moved into a pipeline.
pub struct CountingDetector<D> {
    inner: D,
    calls: Arc<AtomicU64>,
}

impl<D: Detector> CountingDetector<D> {
    pub fn new(inner: D) -> Self {
        Self { inner, calls: Arc::new(AtomicU64::new(0)) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn counter(&self) -> Arc<AtomicU64> {
        Arc::clone(&self.calls)
    }
}

impl<D: Detector> Detector for CountingDetector<D> {
    fn detect(&mut self, frame: &FrameInput) -> Result<Vec<Detection>, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.detect(frame)
    }

    fn latency_class(&self) -> LatencyClass {
        self.inner.latency_class()
    }
}
