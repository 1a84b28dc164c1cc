use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cascade::ContactState;
use crate::geometry::{Detection, ImageGeometry};
use crate::metrics::{GtHand, GtObject, HoiFrameGT};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema_version: u32,
    pub videos: Vec<VideoEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub video_id: String,
    pub n_frames: u64,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    /// Annotation file, relative to the corpus root.
    pub annotations: String,
    /// Frame image pattern relative to the corpus root, with a `{frame}` or
    /// `{frame:0N}` placeholder. Absent in annotation-only corpora.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<String>,
    /// Scripted detector outputs, relative to the corpus root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<String>,
}

impl VideoEntry {
    pub fn geometry(&self) -> ImageGeometry {
        ImageGeometry { width: self.width, height: self.height }
    }

    /// Expands the frame pattern for `frame`.
    pub fn frame_path(&self, frame: u64) -> Option<String> {
        self.frames.as_deref().map(|p| expand_pattern(p, frame))
    }
}

pub(crate) fn expand_pattern(pattern: &str, frame: u64) -> String {
    let mut out = String::with_capacity(pattern.len() + 8);
    let mut rest = pattern;
    while let Some(start) = rest.find("{frame") {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        let Some(end) = tail.find('}') else {
            out.push_str(tail);
            return out;
        };
        let spec = &tail["{frame".len()..end];
        let width = spec.strip_prefix(":0").and_then(|w| w.parse::<usize>().ok());
        match width {
            Some(w) => out.push_str(&format!("{frame:0w$}")),
            None => out.push_str(&frame.to_string()),
        }
        rest = &tail[end + 1..];
    }
    out.push_str(rest);
    out
}

/// First line of every per-video file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHeader {
    pub schema_version: u32,
    pub video_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub frame_index: u64,
    pub hands: Vec<GtHand>,
    #[serde(default)]
    pub active_objects: Vec<GtObject>,
    /// Marks the single frame at which a contact happens.
    #[serde(default)]
    pub contact_point: bool,
}

impl FrameAnnotation {
    pub fn has_contact(&self) -> bool {
        self.hands.iter().any(|h| h.state == ContactState::Contact)
    }

    pub fn to_gt(&self) -> HoiFrameGT {
        HoiFrameGT {
            frame_index: self.frame_index,
            hands: self.hands.clone(),
            active_objects: self.active_objects.clone(),
        }
    }
}

/// One line of a detector script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptFrame {
    pub frame_index: u64,
    /// Optional recognizer confidence for this frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact: Option<f64>,
    #[serde(default)]
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedVideo {
    pub entry: VideoEntry,
    pub frames: BTreeMap<u64, FrameAnnotation>,
    pub script: Option<BTreeMap<u64, ScriptFrame>>,
}

impl AnnotatedVideo {
    pub fn contact_points(&self) -> Vec<u64> {
        self.frames.values().filter(|f| f.contact_point).map(|f| f.frame_index).collect()
    }

    /// Ground truth restricted to the contact-point frames.
    pub fn contact_point_gt(&self) -> Vec<HoiFrameGT> {
        self.frames.values().filter(|f| f.contact_point).map(FrameAnnotation::to_gt).collect()
    }
}
