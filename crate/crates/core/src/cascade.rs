//! Cascade control logic.
//!
//! The recognizer runs on every frame. A trailing window of positive contact
//! predictions decides whether the detector runs on the current frame, and the
//! recognizer and detector outputs are fused into an [`InteractionEvent`]:
//!
//! | recognizer | overlap found | result                              |
//! |------------|---------------|-------------------------------------|
//! | Contact    | yes           | Contact event with the active object|
//! | Contact    | no            | NoContact event, `OdSuppressed`     |
//! | Background | -             | detector is not invoked             |

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::{select_active_object, ActiveObjectResult, AssociationConfig, ConfigError};
use crate::backends::{BackendError, Detector, FrameInput, Recognizer};
use crate::geometry::{top_hands, Detection, HandInstance, ImageGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactLabel {
    Contact,
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactPrediction {
    pub frame_index: u64,
    pub confidence: f64,
    pub label: ContactLabel,
}

impl ContactPrediction {
    /// Labels `confidence` against the recognizer decision threshold.
    pub fn from_confidence(frame_index: u64, confidence: f64, threshold: f64) -> Self {
        let confidence = if confidence.is_finite() { confidence.clamp(0.0, 1.0) } else { 0.0 };
        let label = if confidence >= threshold {
            ContactLabel::Contact
        } else {
            ContactLabel::Background
        };
        Self { frame_index, confidence, label }
    }

    pub fn is_contact(&self) -> bool {
        self.label == ContactLabel::Contact
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactState {
    Contact,
    NoContact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventSource {
    Fused,
    OdSuppressed,
}

/// Output record for one frame on which the detector ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub frame_index: u64,
    pub hands: Vec<HandInstance>,
    pub contact_state: ContactState,
    pub active_object: Option<Detection>,
    /// Index into `hands` of the hand holding `active_object`.
    pub active_hand: Option<usize>,
    pub source: EventSource,
}

impl InteractionEvent {
    /// Per-hand contact state: only the hand matched to the active object is
    /// in contact.
    pub fn hand_state(&self, hand: usize) -> ContactState {
        if self.active_hand == Some(hand) {
            ContactState::Contact
        } else {
            ContactState::NoContact
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerDecision {
    InvokeOd,
    Skip,
}

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("stream order violated: frame {got} pushed after frame {previous}")]
    StreamOrder { previous: u64, got: u64 },
    #[error("fuse called for frame {0} with a background prediction")]
    BackgroundFuse(u64),
    #[error("invalid cascade config: {0}")]
    Config(#[from] ConfigError),
    #[error("decision threshold {0} outside [0, 1]")]
    DecisionThreshold(f64),
    #[error("{stage} failed on frame {frame_index}: {source}")]
    Backend {
        frame_index: u64,
        stage: &'static str,
        #[source]
        source: BackendError,
    },
    #[error("recognizer answered frame {got} when fed frame {expected}")]
    FrameMismatch { expected: u64, got: u64 },
    #[error("frame source failed: {0}")]
    Source(String),
}

/// Trailing window over positive contact predictions.
///
/// With `window_frames = W`, a positive at frame `p` keeps the detector armed
/// for frames `p..=p + W`: the `W` frames preceding the current one count, as
/// does the current frame. `W = 0` triggers on the current frame only.
#[derive(Debug, Clone)]
pub struct TriggerWindow {
    window_frames: u64,
    positives: VecDeque<ContactPrediction>,
    last_frame: Option<u64>,
}

impl TriggerWindow {
    pub fn new(window_frames: u64) -> Self {
        Self { window_frames, positives: VecDeque::new(), last_frame: None }
    }

    pub fn window_frames(&self) -> u64 {
        self.window_frames
    }

    pub fn push(&mut self, p: ContactPrediction) -> Result<TriggerDecision, CascadeError> {
        if let Some(previous) = self.last_frame {
            if p.frame_index <= previous {
                return Err(CascadeError::StreamOrder { previous, got: p.frame_index });
            }
        }
        self.last_frame = Some(p.frame_index);
        if p.is_contact() {
            self.positives.push_back(p);
        }
        let current = p.frame_index;
        while let Some(front) = self.positives.front() {
            if front.frame_index + self.window_frames < current {
                self.positives.pop_front();
            } else {
                break;
            }
        }
        Ok(if self.positives.is_empty() { TriggerDecision::Skip } else { TriggerDecision::InvokeOd })
    }

    /// Most recent positive prediction still inside the window.
    pub fn latest_positive(&self) -> Option<&ContactPrediction> {
        self.positives.back()
    }
}

/// Combines a contact prediction with the detector's view of the frame.
pub fn fuse(
    ar: &ContactPrediction,
    hands: &[HandInstance],
    association: Option<&ActiveObjectResult>,
) -> Result<InteractionEvent, CascadeError> {
    if !ar.is_contact() {
        return Err(CascadeError::BackgroundFuse(ar.frame_index));
    }
    let hands = hands.to_vec();
    let event = match association {
        Some(a) => {
            let active_hand = hands.iter().position(|h| *h == a.matched_hand);
            InteractionEvent {
                frame_index: ar.frame_index,
                hands,
                contact_state: ContactState::Contact,
                active_object: Some(a.object),
                active_hand,
                source: EventSource::Fused,
            }
        }
        None => InteractionEvent {
            frame_index: ar.frame_index,
            hands,
            contact_state: ContactState::NoContact,
            active_object: None,
            active_hand: None,
            source: EventSource::OdSuppressed,
        },
    };
    Ok(event)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadeConfig {
    pub window_frames: u64,
    pub association: AssociationConfig,
    /// Recognizer confidence at or above which a frame is labelled Contact.
    pub decision_threshold: f64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self { window_frames: 30, association: AssociationConfig::default(), decision_threshold: 0.5 }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<(), CascadeError> {
        if !(0.0..=1.0).contains(&self.decision_threshold) {
            return Err(CascadeError::DecisionThreshold(self.decision_threshold));
        }
        self.association.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub recognizer: Duration,
    pub detector: Option<Duration>,
    pub fusion: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub prediction: ContactPrediction,
    pub decision: TriggerDecision,
    pub event: Option<InteractionEvent>,
    pub timing: StageTiming,
}

/// Per-stream cascade state: the trigger window plus the frame geometry.
#[derive(Debug, Clone)]
pub struct CascadeEngine {
    cfg: CascadeConfig,
    geom: ImageGeometry,
    window: TriggerWindow,
}

impl CascadeEngine {
    pub fn new(cfg: CascadeConfig, geom: ImageGeometry) -> Result<Self, CascadeError> {
        cfg.validate()?;
        Ok(Self { cfg, geom, window: TriggerWindow::new(cfg.window_frames) })
    }

    pub fn config(&self) -> &CascadeConfig {
        &self.cfg
    }

    /// Runs one frame through recognizer, trigger, detector and fusion.
    pub fn process<R, D>(
        &mut self,
        frame: &FrameInput,
        recognizer: &mut R,
        detector: &mut D,
    ) -> Result<FrameOutcome, CascadeError>
    where
        R: Recognizer + ?Sized,
        D: Detector + ?Sized,
    {
        let idx = frame.frame_index;
        let t0 = Instant::now();
        let prediction = recognizer.feed(frame).map_err(|source| CascadeError::Backend {
            frame_index: idx,
            stage: "recognizer",
            source,
        })?;
        let recognizer_time = t0.elapsed();
        if prediction.frame_index != idx {
            return Err(CascadeError::FrameMismatch { expected: idx, got: prediction.frame_index });
        }
        let decision = self.window.push(prediction)?;
        let mut timing = StageTiming { recognizer: recognizer_time, ..Default::default() };
        if decision == TriggerDecision::Skip {
            return Ok(FrameOutcome { prediction, decision, event: None, timing });
        }

        let t1 = Instant::now();
        let detections = detector.detect(frame).map_err(|source| CascadeError::Backend {
            frame_index: idx,
            stage: "detector",
            source,
        })?;
        timing.detector = Some(t1.elapsed());

        let t2 = Instant::now();
        // A positive anywhere in the window counts as contact on this frame.
        let support = self.window.latest_positive().copied().unwrap_or(prediction);
        let trigger = ContactPrediction {
            frame_index: idx,
            confidence: support.confidence,
            label: ContactLabel::Contact,
        };
        let hands: Vec<HandInstance> = top_hands(&detections, self.cfg.association.max_hands)
            .into_iter()
            .map(|d| HandInstance::from_detection(d, self.geom))
            .collect();
        let objects: Vec<Detection> = detections.into_iter().filter(|d| !d.is_hand()).collect();
        let association = select_active_object(&hands, &objects, &self.cfg.association);
        let event = fuse(&trigger, &hands, association.as_ref())?;
        timing.fusion = t2.elapsed();
        Ok(FrameOutcome { prediction, decision, event: Some(event), timing })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub decision: TriggerDecision,
    pub timing: StageTiming,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OfflineRun {
    pub events: Vec<InteractionEvent>,
    pub predictions: Vec<ContactPrediction>,
    pub frames: Vec<FrameRecord>,
}

impl OfflineRun {
    pub fn invoked_frames(&self) -> impl Iterator<Item = u64> + '_ {
        self.frames
            .iter()
            .filter(|f| f.decision == TriggerDecision::InvokeOd)
            .map(|f| f.frame_index)
    }
}

/// Drives a whole ordered frame sequence through a fresh cascade.
pub fn run_offline<I, E, R, D>(
    frames: I,
    recognizer: &mut R,
    detector: &mut D,
    cfg: CascadeConfig,
    geom: ImageGeometry,
) -> Result<OfflineRun, CascadeError>
where
    I: IntoIterator<Item = Result<FrameInput, E>>,
    E: std::fmt::Display,
    R: Recognizer + ?Sized,
    D: Detector + ?Sized,
{
    let mut engine = CascadeEngine::new(cfg, geom)?;
    let mut run = OfflineRun::default();
    for frame in frames {
        let frame = frame.map_err(|e| CascadeError::Source(e.to_string()))?;
        let out = engine.process(&frame, recognizer, detector)?;
        run.predictions.push(out.prediction);
        run.frames.push(FrameRecord {
            frame_index: frame.frame_index,
            decision: out.decision,
            timing: out.timing,
        });
        if let Some(ev) = out.event {
            run.events.push(ev);
        }
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendError, CountingDetector};
    use crate::geometry::BBox;
    use proptest::prelude::*;

    fn pred(frame: u64, contact: bool) -> ContactPrediction {
        ContactPrediction::from_confidence(frame, if contact { 0.9 } else { 0.1 }, 0.5)
    }

    /// Scalar restatement of the window rule: is there a positive `p` with
    /// `0 <= current - p <= w`?
    fn replay_rule(positives: &[u64], current: u64, w: u64) -> bool {
        positives.iter().any(|&p| p <= current && current - p <= w)
    }

    #[test]
    fn current_frame_contact_triggers() {
        let mut w = TriggerWindow::new(30);
        assert_eq!(w.push(pred(100, true)).unwrap(), TriggerDecision::InvokeOd);
    }

    #[test]
    fn zero_window_is_current_frame_only() {
        let mut w = TriggerWindow::new(0);
        assert_eq!(w.push(pred(4, true)).unwrap(), TriggerDecision::InvokeOd);
        assert_eq!(w.push(pred(5, false)).unwrap(), TriggerDecision::Skip);
    }

    #[test]
    fn window_boundary() {
        let mut w = TriggerWindow::new(30);
        w.push(pred(100, true)).unwrap();
        for f in 101..=130 {
            assert_eq!(w.push(pred(f, false)).unwrap(), TriggerDecision::InvokeOd, "frame {f}");
            assert!(replay_rule(&[100], f, 30));
        }
        // 131 - 100 = 31 > 30
        assert!(!replay_rule(&[100], 131, 30));
        assert_eq!(w.push(pred(131, false)).unwrap(), TriggerDecision::Skip);
    }

    #[test]
    fn rejects_non_monotone_stream() {
        let mut w = TriggerWindow::new(5);
        w.push(pred(10, false)).unwrap();
        assert!(matches!(w.push(pred(10, true)), Err(CascadeError::StreamOrder { previous: 10, got: 10 })));
        assert!(w.push(pred(9, true)).is_err());
    }

    fn hand(x: f64, c: f64) -> HandInstance {
        let g = ImageGeometry::new(640, 480).unwrap();
        HandInstance::from_detection(Detection::hand(BBox::new(x, 0., x + 10., 10.).unwrap(), c).unwrap(), g)
    }

    #[test]
    fn fuse_contact_with_overlap() {
        let h = hand(0., 0.9);
        let obj = Detection::object(BBox::new(5., 0., 15., 10.).unwrap(), 3, 0.8).unwrap();
        let assoc = ActiveObjectResult { object: obj, matched_hand: h, iou: 1.0 / 3.0 };
        let ar = ContactPrediction::from_confidence(7, 0.95, 0.5);
        let ev = fuse(&ar, &[h], Some(&assoc)).unwrap();
        assert_eq!(ev.contact_state, ContactState::Contact);
        assert_eq!(ev.active_object, Some(obj));
        assert_eq!(ev.active_hand, Some(0));
        assert_eq!(ev.source, EventSource::Fused);
    }

    #[test]
    fn fuse_contact_without_overlap() {
        let ar = ContactPrediction::from_confidence(7, 0.95, 0.5);
        let ev = fuse(&ar, &[hand(0., 0.9)], None).unwrap();
        assert_eq!(ev.contact_state, ContactState::NoContact);
        assert_eq!(ev.source, EventSource::OdSuppressed);
        assert!(ev.active_object.is_none());
    }

    #[test]
    fn fuse_rejects_background() {
        let ar = ContactPrediction::from_confidence(7, 0.1, 0.5);
        assert!(matches!(fuse(&ar, &[hand(0., 0.9)], None), Err(CascadeError::BackgroundFuse(7))));
    }

    struct Fixed(Vec<bool>);

    impl Recognizer for Fixed {
        fn feed(&mut self, f: &FrameInput) -> Result<ContactPrediction, BackendError> {
            let hit = self.0.get(f.frame_index as usize).copied().unwrap_or(false);
            Ok(pred(f.frame_index, hit))
        }
    }

    struct OneHand;

    impl Detector for OneHand {
        fn detect(&mut self, _: &FrameInput) -> Result<Vec<Detection>, BackendError> {
            Ok(vec![
                Detection::hand(BBox::new(0., 0., 10., 10.).unwrap(), 0.9).unwrap(),
                Detection::object(BBox::new(5., 5., 15., 15.).unwrap(), 2, 0.7).unwrap(),
            ])
        }
    }

    struct Failing;

    impl Detector for Failing {
        fn detect(&mut self, f: &FrameInput) -> Result<Vec<Detection>, BackendError> {
            Err(BackendError::MissingFrame(f.frame_index))
        }
    }

    fn ticks(n: u64) -> impl Iterator<Item = Result<FrameInput, std::convert::Infallible>> {
        (0..n).map(|i| Ok(FrameInput::tick(i)))
    }

    fn run(hits: &[bool], window: u64) -> (OfflineRun, u64) {
        let mut rec = Fixed(hits.to_vec());
        let mut det = CountingDetector::new(OneHand);
        let cfg = CascadeConfig { window_frames: window, ..Default::default() };
        let geom = ImageGeometry::new(640, 480).unwrap();
        let out = run_offline(ticks(hits.len() as u64), &mut rec, &mut det, cfg, geom).unwrap();
        let calls = det.calls();
        (out, calls)
    }

    #[test]
    fn background_stream_never_calls_detector() {
        let (out, calls) = run(&[false; 50], 60);
        assert_eq!(calls, 0);
        assert!(out.events.is_empty());
        assert_eq!(out.predictions.len(), 50);
    }

    #[test]
    fn windowed_trigger_events_are_contact() {
        let mut hits = vec![false; 20];
        hits[3] = true;
        let (out, calls) = run(&hits, 5);
        assert_eq!(calls, 6);
        assert_eq!(out.invoked_frames().collect::<Vec<_>>(), vec![3, 4, 5, 6, 7, 8]);
        assert!(out.events.iter().all(|e| e.contact_state == ContactState::Contact));
        assert!(out.events.iter().all(|e| e.active_object.unwrap().class_id == 2));
    }

    #[test]
    fn backend_failure_carries_frame() {
        let mut rec = Fixed(vec![false, true]);
        let cfg = CascadeConfig::default();
        let geom = ImageGeometry::new(640, 480).unwrap();
        let err = run_offline(ticks(2), &mut rec, &mut Failing, cfg, geom).unwrap_err();
        assert!(matches!(err, CascadeError::Backend { frame_index: 1, stage: "detector", .. }));
    }

    proptest! {
        #[test]
        fn detector_calls_match_window_rule(hits in prop::collection::vec(prop::bool::weighted(0.08), 1..200), w in 0u64..70) {
            let (out, calls) = run(&hits, w);
            let positives: Vec<u64> = hits.iter().enumerate().filter(|(_, h)| **h).map(|(i, _)| i as u64).collect();
            let expected: Vec<u64> = (0..hits.len() as u64).filter(|&f| replay_rule(&positives, f, w)).collect();
            prop_assert_eq!(out.invoked_frames().collect::<Vec<_>>(), expected.clone());
            prop_assert_eq!(calls, expected.len() as u64);
            prop_assert_eq!(out.events.len(), expected.len());
            for e in &out.events {
                prop_assert!(e.active_object.is_none() || e.contact_state == ContactState::Contact);
            }
        }

        #[test]
        fn larger_window_only_adds_frames(hits in prop::collection::vec(prop::bool::weighted(0.05), 1..200), w in 0u64..60, extra in 0u64..60) {
            let (small, _) = run(&hits, w);
            let (large, _) = run(&hits, w + extra);
            let large: std::collections::BTreeSet<u64> = large.invoked_frames().collect();
            prop_assert!(small.invoked_frames().all(|f| large.contains(&f)));
        }

        #[test]
        fn replay_is_deterministic(hits in prop::collection::vec(any::<bool>(), 1..100), w in 1u64..40) {
            let (a, _) = run(&hits, w);
            let (b, _) = run(&hits, w);
            prop_assert_eq!(&a.events, &b.events);
            prop_assert_eq!(a.invoked_frames().collect::<Vec<_>>(), b.invoked_frames().collect::<Vec<_>>());
        }
    }
}
