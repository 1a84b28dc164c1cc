use std::sync::Arc;

use egohoi_core::backends::{BackendKind, BackendSetup};
use egohoi_core::{BackendError, Corpus, Detector, ImageGeometry, Recognizer};

use crate::wire::SessionRequest;

#[derive(Debug, thiserror::Error)]
pub enum OpenError {
    #[error("unknown video {0:?}")]
    UnknownVideo(String),
    #[error("invalid session request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Backends and stream properties for a new session.
pub struct OpenedSession {
    pub video_id: Option<String>,
    pub fps: f64,
    pub geometry: ImageGeometry,
    pub recognizer: Box<dyn Recognizer>,
    pub detector: Box<dyn Detector>,
}

/// Builds per-session backends. Called off the async runtime.
pub trait BackendFactory: Send + Sync {
    fn open(&self, request: &SessionRequest) -> Result<OpenedSession, OpenError>;
}

/// Builds backends for videos of a loaded corpus. Sessions that name no
/// video are only possible when both backends are external.
pub struct CorpusFactory {
    corpus: Option<Arc<Corpus>>,
    setup: BackendSetup,
}

impl CorpusFactory {
    pub fn new(corpus: Option<Arc<Corpus>>, setup: BackendSetup) -> Self {
        Self { corpus, setup }
    }
}

impl BackendFactory for CorpusFactory {
    fn open(&self, req: &SessionRequest) -> Result<OpenedSession, OpenError> {
        if let Some(id) = &req.video_id {
            let corpus = self.corpus.as_ref().ok_or_else(|| OpenError::UnknownVideo(id.clone()))?;
            let video = corpus.video(id).map_err(|_| OpenError::UnknownVideo(id.clone()))?;
            return Ok(OpenedSession {
                video_id: Some(id.clone()),
                fps: video.entry.fps,
                geometry: video.entry.geometry(),
                recognizer: self.setup.build_recognizer(video)?,
                detector: self.setup.build_detector(video)?,
            });
        }
        let external = |s: &Option<egohoi_core::backends::BackendSpec>| s.as_ref().is_some_and(|s| s.kind == BackendKind::External);
        if !(external(&self.setup.recognizer) && external(&self.setup.detector)) {
            return Err(OpenError::Invalid("video_id is required for oracle and scripted backends".into()));
        }
        let (Some(fps), Some(w), Some(h)) = (req.fps, req.width, req.height) else {
            return Err(OpenError::Invalid("fps, width and height are required without video_id".into()));
        };
        if !(fps.is_finite() && fps > 0.0) {
            return Err(OpenError::Invalid(format!("fps must be positive, got {fps}")));
        }
        let geometry = ImageGeometry::new(w, h).map_err(|e| OpenError::Invalid(e.to_string()))?;
        let placeholder = egohoi_core::dataset::AnnotatedVideo {
            entry: egohoi_core::dataset::VideoEntry {
                video_id: String::new(),
                n_frames: u64::MAX,
                fps,
                width: w,
                height: h,
                annotations: String::new(),
                frames: None,
                script: None,
            },
            frames: Default::default(),
            script: None,
        };
        Ok(OpenedSession {
            video_id: None,
            fps,
            geometry,
            recognizer: self.setup.build_recognizer(&placeholder)?,
            detector: self.setup.build_detector(&placeholder)?,
        })
    }
}
