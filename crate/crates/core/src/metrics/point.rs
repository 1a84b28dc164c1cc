//! Point-level AP for single-frame action predictions.
//!
//! Predictions are visited from most to least confident; each one claims the
//! nearest still-unmatched ground-truth frame when it lies within the time
//! threshold. Unmatched predictions are false positives, unmatched ground
//! truth are false negatives.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ap::{pr_ap, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPrediction {
    pub frame_index: u64,
    pub confidence: f64,
    #[serde(default)]
    pub class_id: u32,
}

impl PointPrediction {
    pub fn new(frame_index: u64, confidence: f64) -> Self {
        Self { frame_index, confidence, class_id: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRecord {
    /// Index into the prediction list.
    pub prediction: usize,
    pub outcome: Outcome,
    /// Index into the ground-truth list for true positives.
    pub ground_truth: Option<usize>,
}

/// Prediction indices by descending confidence, stable on ties.
pub(crate) fn confidence_order(predictions: &[PointPrediction]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| predictions[b].confidence.total_cmp(&predictions[a].confidence));
    order
}

/// Greedy confidence-ordered matching. Records come back in visiting order.
///
/// When two unmatched ground-truth frames are equally near, the earlier one is
/// taken; duplicates of the same frame are consumed in list order.
pub fn point_match(
    predictions: &[PointPrediction],
    gt_frames: &[u64],
    time_threshold: u64,
) -> Vec<MatchRecord> {
    let mut unmatched: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, &f) in gt_frames.iter().enumerate().rev() {
        unmatched.entry(f).or_default().push(i);
    }

    confidence_order(predictions)
        .into_iter()
        .map(|p| {
            let f = predictions[p].frame_index;
            let before = unmatched.range(..=f).next_back().map(|(&g, _)| g);
            let after = unmatched.range(f.saturating_add(1)..).next().map(|(&g, _)| g);
            let nearest = match (before, after) {
                (Some(b), Some(a)) => Some(if f - b <= a - f { b } else { a }),
                (b, a) => b.or(a),
            };
            let hit = nearest.filter(|&g| g.abs_diff(f) <= time_threshold);
            match hit {
                Some(g) => {
                    let slot = unmatched.get_mut(&g).expect("frame present");
                    let gi = slot.pop().expect("non-empty slot");
                    if slot.is_empty() {
                        unmatched.remove(&g);
                    }
                    MatchRecord { prediction: p, outcome: Outcome::Tp, ground_truth: Some(gi) }
                }
                None => MatchRecord { prediction: p, outcome: Outcome::Fp, ground_truth: None },
            }
        })
        .collect()
}

pub(crate) fn scored(predictions: &[PointPrediction], records: &[MatchRecord]) -> Vec<(f64, Outcome)> {
    records.iter().map(|r| (predictions[r.prediction].confidence, r.outcome)).collect()
}

/// Time thresholds in frames, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PapThresholds(Vec<u64>);

impl PapThresholds {
    pub fn new(mut frames: Vec<u64>) -> Option<Self> {
        if frames.is_empty() {
            return None;
        }
        frames.sort_unstable();
        frames.dedup();
        Some(Self(frames))
    }

    /// Thresholds given in seconds, converted at `fps` and rounded to frames.
    pub fn from_seconds(seconds: &[f64], fps: f64) -> Option<Self> {
        Self::new(seconds.iter().map(|s| (s * fps).round().max(0.0) as u64).collect())
    }

    /// One to ten seconds.
    pub fn default_for(fps: f64) -> Self {
        let secs: Vec<f64> = (1..=10).map(f64::from).collect();
        Self::from_seconds(&secs, fps).expect("non-empty")
    }

    pub fn frames(&self) -> &[u64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PapEntry {
    pub threshold_frames: u64,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PapReport {
    pub per_threshold: Vec<PapEntry>,
    pub mean: f64,
}

/// One evaluated sequence: its predictions and ground-truth frames.
#[derive(Debug, Clone, Copy)]
pub struct PointSequence<'a> {
    pub predictions: &'a [PointPrediction],
    pub gt_frames: &'a [u64],
}

pub fn p_ap(predictions: &[PointPrediction], gt_frames: &[u64], thresholds: &PapThresholds) -> PapReport {
    p_ap_sequences(&[PointSequence { predictions, gt_frames }], thresholds)
}

/// p-AP pooled over several sequences: matching happens within each sequence,
/// ranking and the ground-truth count are shared.
pub fn p_ap_sequences(sequences: &[PointSequence<'_>], thresholds: &PapThresholds) -> PapReport {
    let n_gt: usize = sequences.iter().map(|s| s.gt_frames.len()).sum();
    let per_threshold: Vec<PapEntry> = thresholds
        .frames()
        .iter()
        .map(|&t| {
            let records: Vec<(f64, Outcome)> = sequences
                .iter()
                .flat_map(|s| scored(s.predictions, &point_match(s.predictions, s.gt_frames, t)))
                .collect();
            PapEntry { threshold_frames: t, ap: pr_ap(&records, n_gt) }
        })
        .collect();
    let mean = per_threshold.iter().fold(0.0, |acc, e| acc + e.ap) / per_threshold.len() as f64;
    PapReport { per_threshold, mean }
}
