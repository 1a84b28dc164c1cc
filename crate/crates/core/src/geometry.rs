//! Axis-aligned box geometry and the hand-specific detection rules.
//!
//! Coordinates are continuous pixel positions with the origin in the top-left
//! corner. Areas use `max(0, x_max - x_min) * max(0, y_max - y_min)`; there is
//! no "+1 pixel" convention, so IoU values here differ from tools that treat
//! box edges as inclusive integer pixels.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Class id reserved for hand detections. Object classes start at 1.
pub const HAND_CLASS_ID: u32 = 0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid box [{0}, {1}, {2}, {3}]: coordinates must be finite, non-negative and ordered")]
    InvalidBox(f64, f64, f64, f64),
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("hand detection must use class id {HAND_CLASS_ID}, got {0}")]
    HandClass(u32),
    #[error("object detection may not use the reserved hand class id {HAND_CLASS_ID}")]
    ObjectClass,
    #[error("image geometry must be positive, got {0}x{1}")]
    InvalidImage(u32, u32),
}

/// Axis-aligned box in image space. Serialized as `[x_min, y_min, x_max, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        let ok = [x_min, y_min, x_max, y_max]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
            && x_min <= x_max
            && y_min <= y_max;
        if ok {
            Ok(Self { x_min, y_min, x_max, y_max })
        } else {
            Err(GeometryError::InvalidBox(x_min, y_min, x_max, y_max))
        }
    }

    /// Builds a box from possibly out-of-range values by clamping to the
    /// non-negative quadrant and reordering the corners.
    pub fn clamped(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        let fix = |v: f64| if v.is_finite() { v.max(0.0) } else { 0.0 };
        let (x0, x1) = (fix(x0), fix(x1));
        let (y0, y1) = (fix(y0), fix(y1));
        Self {
            x_min: x0.min(x1),
            y_min: y0.min(y1),
            x_max: x0.max(x1),
            y_max: y0.max(y1),
        }
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y_max - self.y_min).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn centroid(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Moves the box by `(dx, dy)`, clamping at the image origin.
    pub fn translated(&self, dx: f64, dy: f64) -> BBox {
        BBox::clamped(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = GeometryError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.as_array()
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x_min, self.y_min, self.x_max, self.y_max)
    }
}

/// Intersection over union. Zero when the union has no area, so a zero-area
/// box has IoU 0 against everything, itself included.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionKind {
    Hand,
    Object,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDetection")]
pub struct Detection {
    pub bbox: BBox,
    pub kind: DetectionKind,
    pub class_id: u32,
    pub confidence: f64,
}

#[derive(Deserialize)]
struct RawDetection {
    bbox: BBox,
    kind: DetectionKind,
    class_id: u32,
    confidence: f64,
}

impl TryFrom<RawDetection> for Detection {
    type Error = GeometryError;

    fn try_from(r: RawDetection) -> Result<Self, Self::Error> {
        Detection::new(r.bbox, r.kind, r.class_id, r.confidence)
    }
}

impl Detection {
    pub fn new(
        bbox: BBox,
        kind: DetectionKind,
        class_id: u32,
        confidence: f64,
    ) -> Result<Self, GeometryError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(GeometryError::InvalidConfidence(confidence));
        }
        match kind {
            DetectionKind::Hand if class_id != HAND_CLASS_ID => {
                return Err(GeometryError::HandClass(class_id))
            }
            DetectionKind::Object if class_id == HAND_CLASS_ID => {
                return Err(GeometryError::ObjectClass)
            }
            _ => {}
        }
        Ok(Self { bbox, kind, class_id, confidence })
    }

    pub fn hand(bbox: BBox, confidence: f64) -> Result<Self, GeometryError> {
        Self::new(bbox, DetectionKind::Hand, HAND_CLASS_ID, confidence)
    }

    pub fn object(bbox: BBox, class_id: u32, confidence: f64) -> Result<Self, GeometryError> {
        Self::new(bbox, DetectionKind::Object, class_id, confidence)
    }

    pub fn is_hand(&self) -> bool {
        self.kind == DetectionKind::Hand
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageGeometry {
    pub width: u32,
    pub height: u32,
}

impl ImageGeometry {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            Err(GeometryError::InvalidImage(width, height))
        } else {
            Ok(Self { width, height })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandInstance {
    pub detection: Detection,
    pub side: Side,
}

impl HandInstance {
    pub fn from_detection(detection: Detection, geom: ImageGeometry) -> Self {
        let side = hand_side(&detection.bbox, geom);
        Self { detection, side }
    }

    pub fn bbox(&self) -> &BBox {
        &self.detection.bbox
    }

    pub fn confidence(&self) -> f64 {
        self.detection.confidence
    }
}

/// Left when the box centroid lies strictly left of the horizontal image
/// center, Right otherwise (a centroid exactly on the center is Right).
pub fn hand_side(bbox: &BBox, geom: ImageGeometry) -> Side {
    let (cx, _) = bbox.centroid();
    if cx < f64::from(geom.width) / 2.0 {
        Side::Left
    } else {
        Side::Right
    }
}

/// Keeps the `k` most confident hand detections, most confident first.
/// Confidence ties go to the smaller `x_min`, then the smaller `y_min`.
pub fn top_hands(detections: &[Detection], k: usize) -> Vec<Detection> {
    let mut hands: Vec<Detection> = detections.iter().filter(|d| d.is_hand()).copied().collect();
    hands.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.bbox.x_min.total_cmp(&b.bbox.x_min))
            .then_with(|| a.bbox.y_min.total_cmp(&b.bbox.y_min))
    });
    hands.truncate(k);
    hands
}
