//! Cascaded hand-object interaction detection for egocentric video.
//!
//! A contact recognizer runs on every frame; when it has fired within a
//! trailing window, an object detector runs and the object overlapping a hand
//! the most becomes the active object. The crate also carries the evaluation
//! metrics, the corpus format and the inference backends.

pub mod association;
pub mod backends;
pub mod cascade;
pub mod dataset;
pub mod geometry;
pub mod metrics;
pub mod overlay;

pub use association::{select_active_object, ActiveObjectResult, AssociationConfig};
pub use backends::{BackendError, Detector, FrameInput, FramePayload, Recognizer};
pub use cascade::{
    fuse, run_offline, CascadeConfig, CascadeEngine, CascadeError, ContactLabel, ContactPrediction, ContactState,
    EventSource, InteractionEvent, OfflineRun, TriggerDecision, TriggerWindow,
};
pub use dataset::{load_corpus, Corpus, DatasetError};
pub use geometry::{hand_side, iou, top_hands, BBox, Detection, DetectionKind, HandInstance, ImageGeometry, Side};
pub use metrics::{hoi_ap, p_ap, HoiApReport, PapReport, PapThresholds};
