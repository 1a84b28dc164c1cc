//! HOI AP suite: AP Hand, Hand+State, Hand+Side and Hand+All.
//!
//! Predicted hands are matched to ground-truth hands once per frame, greedily
//! by hand confidence, at a box IoU of at least `box_iou_match`. The four
//! metrics share that matching and differ only in what else a matched hand
//! must get right:
//!
//! - Hand: nothing else;
//! - Hand+State: the contact state;
//! - Hand+Side: the left/right label;
//! - Hand+All: state and side, plus the active object (box and class) when
//!   the ground-truth hand is in contact.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ap::{pr_ap, Outcome};
use super::MetricsError;
use crate::cascade::{ContactState, InteractionEvent};
use crate::geometry::{iou, BBox, Side};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtHand {
    pub bbox: BBox,
    pub side: Side,
    pub state: ContactState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtObject {
    pub bbox: BBox,
    pub class_id: u32,
    /// Side of the hand holding the object.
    pub hand: Side,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoiFrameGT {
    pub frame_index: u64,
    pub hands: Vec<GtHand>,
    #[serde(default)]
    pub active_objects: Vec<GtObject>,
}

impl HoiFrameGT {
    /// The active object linked to `side`, if any.
    pub fn object_for(&self, side: Side) -> Option<&GtObject> {
        self.active_objects.iter().find(|o| o.hand == side)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoiApReport {
    pub ap_hand: f64,
    pub ap_hand_state: f64,
    pub ap_hand_side: f64,
    pub ap_hand_all: f64,
    pub n_gt_hands: usize,
    pub n_predicted_hands: usize,
}

/// Per predicted hand: confidence plus one TP flag per metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandRecord {
    pub confidence: f64,
    pub hand: bool,
    pub state: bool,
    pub side: bool,
    pub all: bool,
}

struct PredHand<'a> {
    event: &'a InteractionEvent,
    hand: usize,
}

fn frame_records(
    preds: &[PredHand<'_>],
    gt: &HoiFrameGT,
    box_iou_match: f64,
    out: &mut [HandRecord],
) {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        let ca = preds[a].event.hands[preds[a].hand].confidence();
        let cb = preds[b].event.hands[preds[b].hand].confidence();
        cb.total_cmp(&ca)
    });
    let mut taken = vec![false; gt.hands.len()];
    for p in order {
        let PredHand { event, hand } = preds[p];
        let h = &event.hands[hand];
        let mut best: Option<(usize, f64)> = None;
        for (g, gh) in gt.hands.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = iou(h.bbox(), &gh.bbox);
            if v >= box_iou_match && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        let rec = &mut out[p];
        rec.confidence = h.confidence();
        let Some((g, _)) = best else { continue };
        taken[g] = true;
        let gh = &gt.hands[g];
        let state = event.hand_state(hand) == gh.state;
        let side = h.side == gh.side;
        let object = match (gh.state, gt.object_for(gh.side)) {
            (ContactState::Contact, Some(go)) => event
                .active_object
                .filter(|_| event.active_hand == Some(hand))
                .is_some_and(|o| o.class_id == go.class_id && iou(&o.bbox, &go.bbox) >= box_iou_match),
            _ => true,
        };
        rec.hand = true;
        rec.state = state;
        rec.side = side;
        rec.all = state && side && object;
    }
}

/// Builds one [`HandRecord`] per predicted hand, in event order.
pub fn hand_records(
    events: &[InteractionEvent],
    gt: &[HoiFrameGT],
    box_iou_match: f64,
) -> Result<Vec<HandRecord>, MetricsError> {
    let mut index: HashMap<u64, usize> = HashMap::with_capacity(gt.len());
    for (i, f) in gt.iter().enumerate() {
        if index.insert(f.frame_index, i).is_some() {
            return Err(MetricsError::DuplicateFrame(f.frame_index));
        }
    }

    // group predicted hands by frame, remembering their slot in event order
    let mut by_frame: HashMap<usize, (Vec<PredHand<'_>>, Vec<usize>)> = HashMap::new();
    let mut n = 0usize;
    for event in events {
        let g = *index.get(&event.frame_index).ok_or(MetricsError::UnknownFrame(event.frame_index))?;
        let entry = by_frame.entry(g).or_default();
        for hand in 0..event.hands.len() {
            entry.0.push(PredHand { event, hand });
            entry.1.push(n);
            n += 1;
        }
    }

    let blank = HandRecord { confidence: 0.0, hand: false, state: false, side: false, all: false };
    let mut records = vec![blank; n];
    let mut scratch = Vec::new();
    for (g, (preds, slots)) in by_frame {
        scratch.clear();
        scratch.resize(preds.len(), blank);
        frame_records(&preds, &gt[g], box_iou_match, &mut scratch);
        for (slot, rec) in slots.into_iter().zip(scratch.iter()) {
            records[slot] = *rec;
        }
    }
    Ok(records)
}

pub fn report_from_records(records: &[HandRecord], n_gt_hands: usize) -> HoiApReport {
    let ap = |flag: fn(&HandRecord) -> bool| {
        let scored: Vec<(f64, Outcome)> = records
            .iter()
            .map(|r| (r.confidence, if flag(r) { Outcome::Tp } else { Outcome::Fp }))
            .collect();
        pr_ap(&scored, n_gt_hands)
    };
    HoiApReport {
        ap_hand: ap(|r| r.hand),
        ap_hand_state: ap(|r| r.state),
        ap_hand_side: ap(|r| r.side),
        ap_hand_all: ap(|r| r.all),
        n_gt_hands,
        n_predicted_hands: records.len(),
    }
}

/// HOI AP of `events` against the ground-truth frames `gt`.
///
/// Every event frame must appear in `gt`; ground-truth frames without events
/// contribute false negatives. Predictions are ranked by hand confidence.
pub fn hoi_ap(
    events: &[InteractionEvent],
    gt: &[HoiFrameGT],
    box_iou_match: f64,
) -> Result<HoiApReport, MetricsError> {
    hoi_ap_sequences(&[(events, gt)], box_iou_match)
}

/// HOI AP pooled over several videos; frame indices only need to be unique
/// within a video.
pub fn hoi_ap_sequences(
    videos: &[(&[InteractionEvent], &[HoiFrameGT])],
    box_iou_match: f64,
) -> Result<HoiApReport, MetricsError> {
    let mut records = Vec::new();
    let mut n_gt = 0;
    for (events, gt) in videos {
        records.extend(hand_records(events, gt, box_iou_match)?);
        n_gt += gt.iter().map(|f| f.hands.len()).sum::<usize>();
    }
    Ok(report_from_records(&records, n_gt))
}
