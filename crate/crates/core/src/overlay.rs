//! Annotated frame dumps: hands in green, objects in blue, with an optional
//! green (success) or red (failure) frame border.

use image::{ImageEncoder, Rgb, RgbImage};

use crate::cascade::InteractionEvent;
use crate::geometry::{iou, BBox, ImageGeometry};
use crate::metrics::HoiFrameGT;

pub const HAND_COLOR: Rgb<u8> = Rgb([0, 200, 0]);
pub const OBJECT_COLOR: Rgb<u8> = Rgb([0, 80, 255]);
pub const SUCCESS_COLOR: Rgb<u8> = Rgb([0, 200, 0]);
pub const FAILURE_COLOR: Rgb<u8> = Rgb([220, 0, 0]);

const BACKGROUND: Rgb<u8> = Rgb([32, 32, 32]);

pub fn draw_rect(img: &mut RgbImage, b: &BBox, color: Rgb<u8>, thickness: u32) {
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return;
    }
    let clamp = |v: f64, max: u32| (v.max(0.0) as u32).min(max - 1);
    let (x0, y0) = (clamp(b.x_min(), w), clamp(b.y_min(), h));
    let (x1, y1) = (clamp(b.x_max(), w), clamp(b.y_max(), h));
    for t in 0..thickness {
        let (ya, yb) = (y0.saturating_add(t).min(y1), y1.saturating_sub(t).max(y0));
        let (xa, xb) = (x0.saturating_add(t).min(x1), x1.saturating_sub(t).max(x0));
        for x in x0..=x1 {
            img.put_pixel(x, ya, color);
            img.put_pixel(x, yb, color);
        }
        for y in y0..=y1 {
            img.put_pixel(xa, y, color);
            img.put_pixel(xb, y, color);
        }
    }
}

pub fn draw_event(img: &mut RgbImage, event: &InteractionEvent) {
    for (i, h) in event.hands.iter().enumerate() {
        draw_rect(img, h.bbox(), HAND_COLOR, if event.active_hand == Some(i) { 3 } else { 2 });
    }
    if let Some(o) = &event.active_object {
        draw_rect(img, &o.bbox, OBJECT_COLOR, 3);
    }
}

pub fn draw_border(img: &mut RgbImage, success: bool) {
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return;
    }
    let b = BBox::new(0.0, 0.0, f64::from(w - 1), f64::from(h - 1)).expect("non-negative");
    draw_rect(img, &b, if success { SUCCESS_COLOR } else { FAILURE_COLOR }, 6);
}

/// Whether the event retrieved the annotated active object: same hand side,
/// box IoU of at least `box_iou_match` and the same class. A frame without an
/// annotated active object succeeds when none is predicted.
pub fn event_matches_gt(event: &InteractionEvent, gt: &HoiFrameGT, box_iou_match: f64) -> bool {
    let predicted = event.active_object.zip(event.active_hand.and_then(|i| event.hands.get(i)));
    match (predicted, gt.active_objects.first()) {
        (None, None) => true,
        (Some((obj, hand)), Some(_)) => gt.object_for(hand.side).is_some_and(|g| {
            g.class_id == obj.class_id && iou(&g.bbox, &obj.bbox) >= box_iou_match
        }),
        _ => false,
    }
}

/// Draws `event` over the decoded `frame` (or a blank canvas when there are
/// no pixels) and returns JPEG bytes.
pub fn render(
    frame: Option<&[u8]>,
    geom: ImageGeometry,
    event: Option<&InteractionEvent>,
    verdict: Option<bool>,
) -> Result<Vec<u8>, image::ImageError> {
    let mut img = match frame {
        Some(bytes) => image::load_from_memory(bytes)?.to_rgb8(),
        None => RgbImage::from_pixel(geom.width, geom.height, BACKGROUND),
    };
    if let Some(ev) = event {
        draw_event(&mut img, ev);
    }
    if let Some(ok) = verdict {
        draw_border(&mut img, ok);
    }
    let mut out = Vec::new();
    image::codecs::jpeg::JpegEncoder::new_with_quality(&mut out, 85).write_image(
        img.as_raw(),
        img.width(),
        img.height(),
        image::ExtendedColorType::Rgb8,
    )?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{ContactState, EventSource};
    use crate::geometry::{Detection, HandInstance, Side};
    use crate::metrics::{GtHand, GtObject};

    fn event() -> InteractionEvent {
        let g = ImageGeometry::new(64, 48).unwrap();
        let hand = HandInstance::from_detection(Detection::hand(BBox::new(4.0, 20.0, 20.0, 40.0).unwrap(), 0.9).unwrap(), g);
        InteractionEvent {
            frame_index: 0,
            hands: vec![hand],
            contact_state: ContactState::Contact,
            active_object: Some(Detection::object(BBox::new(10.0, 10.0, 30.0, 30.0).unwrap(), 2, 0.8).unwrap()),
            active_hand: Some(0),
            source: EventSource::Fused,
        }
    }

    #[test]
    fn colors_land_on_box_edges() {
        let mut img = RgbImage::from_pixel(64, 48, BACKGROUND);
        draw_event(&mut img, &event());
        assert_eq!(*img.get_pixel(4, 30), HAND_COLOR);
        assert_eq!(*img.get_pixel(30, 15), OBJECT_COLOR);
        assert_eq!(*img.get_pixel(50, 5), BACKGROUND);
        draw_border(&mut img, false);
        assert_eq!(*img.get_pixel(0, 0), FAILURE_COLOR);
    }

    #[test]
    fn render_decodes_back() {
        let bytes = render(None, ImageGeometry::new(64, 48).unwrap(), Some(&event()), Some(true)).unwrap();
        let back = image::load_from_memory(&bytes).unwrap();
        assert_eq!((back.width(), back.height()), (64, 48));
    }

    #[test]
    fn verdicts() {
        let ev = event();
        let mut gt = HoiFrameGT {
            frame_index: 0,
            hands: vec![GtHand { bbox: *ev.hands[0].bbox(), side: Side::Left, state: ContactState::Contact }],
            active_objects: vec![GtObject { bbox: ev.active_object.unwrap().bbox, class_id: 2, hand: Side::Left }],
        };
        assert!(event_matches_gt(&ev, &gt, 0.5));
        gt.active_objects[0].class_id = 3;
        assert!(!event_matches_gt(&ev, &gt, 0.5));
        gt.active_objects.clear();
        assert!(!event_matches_gt(&ev, &gt, 0.5));
    }
}
