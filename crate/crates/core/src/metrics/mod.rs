//! Evaluation toolkit: point-level AP for contact predictions and the HOI AP
//! suite, both built on the same all-point AP core.

use thiserror::Error;

pub mod ap;
pub mod downsample;
pub mod hoi;
pub mod point;
pub mod report;

pub use ap::{pr_ap, Outcome};
pub use downsample::downsample_indices;
pub use hoi::{hoi_ap, hoi_ap_sequences, GtHand, GtObject, HoiApReport, HoiFrameGT};
pub use point::{p_ap, p_ap_sequences, point_match, MatchRecord, PapReport, PapThresholds, PointPrediction, PointSequence};

/// Box IoU needed for a predicted hand or object to match ground truth.
pub const DEFAULT_BOX_IOU_MATCH: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("frame {0} has predictions but no ground-truth entry")]
    UnknownFrame(u64),
    #[error("frame {0} appears twice in the ground truth")]
    DuplicateFrame(u64),
    #[error("positive frame {frame} outside 0..{n_frames}")]
    PositiveOutOfRange { frame: u64, n_frames: u64 },
    #[error("invalid frame rates: src {src_fps}, dst {dst_fps}")]
    FrameRate { src_fps: f64, dst_fps: f64 },
}
