//! File-driven backends with an optional seeded noise model.
//!
//! Noise is drawn from a generator seeded by `(seed, frame_index)`, so the
//! output for a frame does not depend on which other frames were requested
//! or in what order.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{BackendError, Detector, FrameInput, Recognizer};
use crate::cascade::ContactPrediction;
use crate::dataset::{AnnotatedVideo, ScriptFrame};
use crate::geometry::{BBox, Detection};

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a sub-seed from a root seed and a label (a video id, a role).
pub fn derive_seed(root: u64, label: &str) -> u64 {
    // FNV-1a keeps this stable across platforms and releases
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01B3);
    }
    splitmix(root ^ h)
}

fn frame_rng(seed: u64, frame: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(frame)))
}

/// Per-frame detector outputs for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendScript {
    pub n_frames: u64,
    pub frames: BTreeMap<u64, ScriptFrame>,
}

impl BackendScript {
    /// The script shipped with `video`, if it has one.
    pub fn from_video(video: &AnnotatedVideo) -> Option<Self> {
        video.script.as_ref().map(|frames| Self { n_frames: video.entry.n_frames, frames: frames.clone() })
    }

    /// A script that replays the annotated hands and active objects.
    pub fn from_ground_truth(video: &AnnotatedVideo) -> Self {
        let frames = video
            .frames
            .iter()
            .map(|(&f, a)| {
                let mut detections: Vec<Detection> =
                    a.hands.iter().map(|h| Detection::hand(h.bbox, 1.0).expect("unit confidence")).collect();
                detections.extend(
                    a.active_objects
                        .iter()
                        .map(|o| Detection::object(o.bbox, o.class_id, 1.0).expect("unit confidence")),
                );
                (f, ScriptFrame { frame_index: f, contact: None, detections })
            })
            .collect();
        Self { n_frames: video.entry.n_frames, frames }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Standard deviation of per-coordinate box jitter, in pixels.
    pub box_sigma: f64,
    /// Standard deviation of additive confidence jitter.
    pub confidence_sigma: f64,
    /// Probability that a detection is dropped.
    pub drop_prob: f64,
}

impl NoiseModel {
    pub fn is_noiseless(&self) -> bool {
        self.box_sigma == 0.0 && self.confidence_sigma == 0.0 && self.drop_prob == 0.0
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let ok = self.box_sigma >= 0.0
            && self.confidence_sigma >= 0.0
            && (0.0..=1.0).contains(&self.drop_prob)
            && self.box_sigma.is_finite()
            && self.confidence_sigma.is_finite();
        if ok {
            Ok(())
        } else {
            Err(BackendError::Spec(format!("invalid noise model {self:?}")))
        }
    }

    fn apply(&self, dets: &[Detection], rng: &mut ChaCha8Rng) -> Vec<Detection> {
        let boxes = Normal::new(0.0, self.box_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
        let confs = Normal::new(0.0, self.confidence_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
        let mut out = Vec::with_capacity(dets.len());
        for d in dets {
            // draw every variate unconditionally so the stream stays aligned
            let drop = rng.random::<f64>() < self.drop_prob;
            let j: [f64; 4] = std::array::from_fn(|_| boxes.sample(rng));
            let c = confs.sample(rng);
            if drop {
                continue;
            }
            let [x0, y0, x1, y1] = d.bbox.as_array();
            let bbox = if self.box_sigma > 0.0 {
                BBox::clamped(x0 + j[0], y0 + j[1], x1 + j[2], y1 + j[3])
            } else {
                d.bbox
            };
            let confidence = if self.confidence_sigma > 0.0 {
                (d.confidence + c).clamp(0.01, 1.0)
            } else {
                d.confidence
            };
            out.push(Detection { bbox, confidence, ..*d });
        }
        out
    }
}

/// Replays a [`BackendScript`], optionally perturbed by a [`NoiseModel`].
#[derive(Debug, Clone)]
pub struct ScriptedDetector {
    script: BackendScript,
    noise: NoiseModel,
    seed: u64,
}

impl ScriptedDetector {
    pub fn new(script: BackendScript, noise: NoiseModel, seed: u64) -> Result<Self, BackendError> {
        noise.validate()?;
        Ok(Self { script, noise, seed })
    }

    pub fn noiseless(script: BackendScript) -> Self {
        Self { script, noise: NoiseModel::default(), seed: 0 }
    }
}

impl Detector for ScriptedDetector {
    fn detect(&mut self, frame: &FrameInput) -> Result<Vec<Detection>, BackendError> {
        let f = frame.frame_index;
        let entry = self.script.frames.get(&f).ok_or(BackendError::MissingFrame(f))?;
        if self.noise.is_noiseless() {
            return Ok(entry.detections.clone());
        }
        Ok(self.noise.apply(&entry.detections, &mut frame_rng(self.seed, f)))
    }
}

/// Imperfect contact recognizer derived from annotated contact points.
///
/// Each contact point is either missed or announced by a single positive
/// `lead` frames early (`lead` uniform in `lead_frames`). Background frames
/// turn positive with probability `false_positive_rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecognizerNoise {
    pub miss_prob: f64,
    pub lead_frames: (u64, u64),
    pub false_positive_rate: f64,
    pub decision_threshold: f64,
}

impl Default for RecognizerNoise {
    fn default() -> Self {
        Self { miss_prob: 0.0, lead_frames: (0, 0), false_positive_rate: 0.0, decision_threshold: 0.5 }
    }
}

impl RecognizerNoise {
    pub fn validate(&self) -> Result<(), BackendError> {
        let ok = (0.0..=1.0).contains(&self.miss_prob)
            && (0.0..=1.0).contains(&self.false_positive_rate)
            && (0.0..=1.0).contains(&self.decision_threshold)
            && self.lead_frames.0 <= self.lead_frames.1;
        if ok {
            Ok(())
        } else {
            Err(BackendError::Spec(format!("invalid recognizer noise {self:?}")))
        }
    }
}

/// Replays per-frame contact confidences.
#[derive(Debug, Clone)]
pub struct ScriptedRecognizer {
    confidences: Vec<f64>,
    threshold: f64,
}

impl ScriptedRecognizer {
    /// Frames absent from `confidences` score 0.
    pub fn from_confidences(confidences: &BTreeMap<u64, f64>, n_frames: u64, threshold: f64) -> Self {
        let mut v = vec![0.0; n_frames as usize];
        for (&f, &c) in confidences.range(..n_frames) {
            v[f as usize] = c;
        }
        Self { confidences: v, threshold }
    }

    /// Uses the `contact` field of a script.
    pub fn from_script(script: &BackendScript, threshold: f64) -> Self {
        let conf = script.frames.iter().filter_map(|(&f, s)| s.contact.map(|c| (f, c))).collect();
        Self::from_confidences(&conf, script.n_frames, threshold)
    }

    pub fn synthetic(
        contact_points: &[u64],
        n_frames: u64,
        noise: &RecognizerNoise,
        seed: u64,
    ) -> Result<Self, BackendError> {
        noise.validate()?;
        let thr = noise.decision_threshold;
        let mut conf: Vec<f64> = (0..n_frames)
            .map(|f| {
                let mut rng = frame_rng(seed, f);
                let fp = rng.random::<f64>() < noise.false_positive_rate;
                let u = rng.random::<f64>();
                if fp {
                    thr + (1.0 - thr) * u * 0.8
                } else {
                    thr * u * 0.8
                }
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ 0xC0A7));
        for &cp in contact_points {
            let miss = rng.random::<f64>() < noise.miss_prob;
            let lead = rng.random_range(noise.lead_frames.0..=noise.lead_frames.1);
            let c = thr + (1.0 - thr) * (0.5 + 0.5 * rng.random::<f64>());
            if miss || lead > cp || cp >= n_frames {
                continue;
            }
            conf[(cp - lead) as usize] = c;
        }
        Ok(Self { confidences: conf, threshold: thr })
    }
}

impl Recognizer for ScriptedRecognizer {
    fn feed(&mut self, frame: &FrameInput) -> Result<ContactPrediction, BackendError> {
        let f = frame.frame_index;
        let n_frames = self.confidences.len() as u64;
        let c = *self.confidences.get(f as usize).ok_or(BackendError::FrameOutOfRange { frame: f, n_frames })?;
        Ok(ContactPrediction::from_confidence(f, c, self.threshold))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn script() -> BackendScript {
        let mut frames = BTreeMap::new();
        for f in 0..20u64 {
            let x = f as f64;
            let detections = vec![
                Detection::hand(BBox::new(x, 10.0, x + 40.0, 50.0).unwrap(), 0.9).unwrap(),
                Detection::object(BBox::new(x + 20.0, 0.0, x + 60.0, 40.0).unwrap(), 3, 0.8).unwrap(),
            ];
            frames.insert(f, ScriptFrame { frame_index: f, contact: None, detections });
        }
        BackendScript { n_frames: 20, frames }
    }

    #[test]
    fn noiseless_replays_exactly() {
        let s = script();
        let mut d = ScriptedDetector::noiseless(s.clone());
        for f in 0..20 {
            assert_eq!(d.detect(&FrameInput::tick(f)).unwrap(), s.frames[&f].detections);
        }
        assert!(matches!(d.detect(&FrameInput::tick(20)), Err(BackendError::MissingFrame(20))));
    }

    #[test]
    fn noise_is_seeded_per_frame() {
        let noise = NoiseModel { box_sigma: 3.0, confidence_sigma: 0.1, drop_prob: 0.2 };
        let mut a = ScriptedDetector::new(script(), noise, 9).unwrap();
        let mut b = ScriptedDetector::new(script(), noise, 9).unwrap();
        let fwd: Vec<_> = (0..20).map(|f| a.detect(&FrameInput::tick(f)).unwrap()).collect();
        let mut rev: Vec<_> = (0..20).rev().map(|f| b.detect(&FrameInput::tick(f)).unwrap()).collect();
        rev.reverse();
        assert_eq!(fwd, rev);
        assert_ne!(fwd, script().frames.values().map(|s| s.detections.clone()).collect::<Vec<_>>());
        let mut c = ScriptedDetector::new(script(), noise, 10).unwrap();
        let other: Vec<_> = (0..20).map(|f| c.detect(&FrameInput::tick(f)).unwrap()).collect();
        assert_ne!(fwd, other);
    }

    #[test]
    fn invalid_noise_rejected() {
        let bad = NoiseModel { drop_prob: 1.5, ..Default::default() };
        assert!(ScriptedDetector::new(script(), bad, 0).is_err());
    }

    #[test]
    fn synthetic_recognizer_leads_contacts() {
        let noise = RecognizerNoise { lead_frames: (5, 5), ..Default::default() };
        let mut r = ScriptedRecognizer::synthetic(&[10, 50], 100, &noise, 1).unwrap();
        let positives: Vec<u64> =
            (0..100).filter(|&f| r.feed(&FrameInput::tick(f)).unwrap().is_contact()).collect();
        assert_eq!(positives, vec![5, 45]);
    }

    #[test]
    fn synthetic_recognizer_misses_everything() {
        let noise = RecognizerNoise { miss_prob: 1.0, ..Default::default() };
        let mut r = ScriptedRecognizer::synthetic(&[10, 50], 100, &noise, 1).unwrap();
        assert!((0..100).all(|f| !r.feed(&FrameInput::tick(f)).unwrap().is_contact()));
    }

    #[test]
    fn derived_seeds_differ_by_label() {
        assert_ne!(derive_seed(1, "v000"), derive_seed(1, "v001"));
        assert_eq!(derive_seed(1, "v000"), derive_seed(1, "v000"));
    }
}
