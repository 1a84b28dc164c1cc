use std::collections::{BTreeMap, BTreeSet};

use super::{BackendError, Detector, FrameInput, Recognizer};
use crate::cascade::{ContactLabel, ContactPrediction};
use crate::dataset::AnnotatedVideo;
use crate::geometry::Detection;

/// Emits Contact at confidence 1.0 on annotated contact points and Background
/// at 0.0 everywhere else.
#[derive(Debug, Clone)]
pub struct OracleRecognizer {
    contacts: BTreeSet<u64>,
    n_frames: u64,
}

impl OracleRecognizer {
    pub fn new(video: &AnnotatedVideo) -> Self {
        Self::from_contacts(video.contact_points(), video.entry.n_frames)
    }

    pub fn from_contacts(contacts: impl IntoIterator<Item = u64>, n_frames: u64) -> Self {
        Self { contacts: contacts.into_iter().collect(), n_frames }
    }
}

impl Recognizer for OracleRecognizer {
    fn feed(&mut self, frame: &FrameInput) -> Result<ContactPrediction, BackendError> {
        let f = frame.frame_index;
        if f >= self.n_frames {
            return Err(BackendError::FrameOutOfRange { frame: f, n_frames: self.n_frames });
        }
        Ok(if self.contacts.contains(&f) {
            ContactPrediction { frame_index: f, confidence: 1.0, label: ContactLabel::Contact }
        } else {
            ContactPrediction { frame_index: f, confidence: 0.0, label: ContactLabel::Background }
        })
    }
}

/// Returns the annotated hands and active objects at confidence 1.0.
/// Frames without an annotation yield no detections.
#[derive(Debug, Clone)]
pub struct OracleDetector {
    frames: BTreeMap<u64, Vec<Detection>>,
    n_frames: u64,
}

impl OracleDetector {
    pub fn new(video: &AnnotatedVideo) -> Self {
        let frames = video
            .frames
            .iter()
            .map(|(&f, a)| {
                let mut dets: Vec<Detection> =
                    a.hands.iter().map(|h| Detection::hand(h.bbox, 1.0).expect("unit confidence")).collect();
                dets.extend(
                    a.active_objects
                        .iter()
                        .map(|o| Detection::object(o.bbox, o.class_id, 1.0).expect("unit confidence")),
                );
                (f, dets)
            })
            .collect();
        Self { frames, n_frames: video.entry.n_frames }
    }
}

impl Detector for OracleDetector {
    fn detect(&mut self, frame: &FrameInput) -> Result<Vec<Detection>, BackendError> {
        let f = frame.frame_index;
        if f >= self.n_frames {
            return Err(BackendError::FrameOutOfRange { frame: f, n_frames: self.n_frames });
        }
        Ok(self.frames.get(&f).cloned().unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_definition() {
        let mut r = OracleRecognizer::from_contacts([42], 100);
        let p = r.feed(&FrameInput::tick(42)).unwrap();
        assert_eq!((p.frame_index, p.confidence, p.label), (42, 1.0, ContactLabel::Contact));
        let p = r.feed(&FrameInput::tick(43)).unwrap();
        assert_eq!((p.confidence, p.label), (0.0, ContactLabel::Background));
        assert!(matches!(
            r.feed(&FrameInput::tick(100)),
            Err(BackendError::FrameOutOfRange { frame: 100, n_frames: 100 })
        ));
    }
}
