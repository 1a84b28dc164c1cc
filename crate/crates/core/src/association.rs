//! Active-object selection: the object overlapping a retained hand the most.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, Detection, HandInstance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("iou threshold {0} outside [0, 1]")]
    IouThreshold(f64),
    #[error("max_hands must be at least 1")]
    MaxHands,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssociationConfig {
    pub iou_threshold: f64,
    pub max_hands: usize,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.01, max_hands: 2 }
    }
}

impl AssociationConfig {
    pub fn new(iou_threshold: f64, max_hands: usize) -> Result<Self, ConfigError> {
        let cfg = Self { iou_threshold, max_hands };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err(ConfigError::IouThreshold(self.iou_threshold));
        }
        if self.max_hands == 0 {
            return Err(ConfigError::MaxHands);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActiveObjectResult {
    pub object: Detection,
    pub matched_hand: HandInstance,
    pub iou: f64,
}

/// Ranks two candidate pairs; `Greater` means `a` wins.
///
/// IoU first, then object confidence, then hand confidence, then the smaller
/// object `x_min`. The remaining keys only make the order total so the result
/// does not depend on input order.
fn rank(a: &ActiveObjectResult, b: &ActiveObjectResult) -> Ordering {
    let (oa, ob) = (&a.object, &b.object);
    let (ha, hb) = (&a.matched_hand.detection, &b.matched_hand.detection);
    a.iou
        .total_cmp(&b.iou)
        .then_with(|| oa.confidence.total_cmp(&ob.confidence))
        .then_with(|| ha.confidence.total_cmp(&hb.confidence))
        .then_with(|| ob.bbox.x_min().total_cmp(&oa.bbox.x_min()))
        .then_with(|| ob.bbox.y_min().total_cmp(&oa.bbox.y_min()))
        .then_with(|| ob.bbox.x_max().total_cmp(&oa.bbox.x_max()))
        .then_with(|| ob.bbox.y_max().total_cmp(&oa.bbox.y_max()))
        .then_with(|| ob.class_id.cmp(&oa.class_id))
        .then_with(|| hb.bbox.x_min().total_cmp(&ha.bbox.x_min()))
        .then_with(|| hb.bbox.y_min().total_cmp(&ha.bbox.y_min()))
        .then_with(|| hb.bbox.x_max().total_cmp(&ha.bbox.x_max()))
        .then_with(|| hb.bbox.y_max().total_cmp(&ha.bbox.y_max()))
}

/// Best (hand, object) pair by IoU regardless of any threshold.
pub fn best_pair(hands: &[HandInstance], objects: &[Detection]) -> Option<ActiveObjectResult> {
    hands
        .iter()
        .flat_map(|h| {
            objects.iter().filter(|o| !o.is_hand()).map(move |o| ActiveObjectResult {
                object: *o,
                matched_hand: *h,
                iou: iou(&h.detection.bbox, &o.bbox),
            })
        })
        .max_by(rank)
}

/// Returns the best pair when its IoU strictly exceeds the configured
/// threshold. At most one active object is reported per frame.
pub fn select_active_object(
    hands: &[HandInstance],
    objects: &[Detection],
    cfg: &AssociationConfig,
) -> Option<ActiveObjectResult> {
    let hands = &hands[..hands.len().min(cfg.max_hands)];
    best_pair(hands, objects).filter(|r| r.iou > cfg.iou_threshold)
}
