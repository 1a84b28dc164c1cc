//! Synthetic corpora: two hands drifting on smooth trajectories, scripted
//! contact spans with a known hand-object overlap, and distractor objects
//! that never touch a hand.
//!
//! Ground truth and the noiseless detector script are generated together, so
//! the two agree by construction.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use image::{ImageEncoder, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{load_corpus, write_corpus, AnnotatedVideo, Corpus, CorpusManifest, DatasetError, FrameAnnotation, ScriptFrame, VideoEntry, SCHEMA_VERSION};
use crate::cascade::ContactState;
use crate::geometry::{BBox, Detection, Side};
use crate::metrics::{GtHand, GtObject};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub videos: usize,
    pub frames_per_video: u64,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub contacts_per_video: usize,
    /// Inclusive range of contact span lengths in frames.
    pub span_frames: (u64, u64),
    pub n_classes: u32,
    pub distractors: usize,
    /// Hand-object IoU levels assigned to contact spans in rotation.
    pub overlap_ious: Vec<f64>,
    /// Also render JPEG frames.
    pub images: bool,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            videos: 3,
            frames_per_video: 100,
            fps: 30.0,
            width: 640,
            height: 480,
            contacts_per_video: 4,
            span_frames: (6, 12),
            n_classes: 8,
            distractors: 2,
            overlap_ious: vec![0.02, 0.04, 0.08, 0.15, 0.25, 0.4],
            images: false,
        }
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn square(cx: f64, cy: f64, half_w: f64, half_h: f64) -> BBox {
    BBox::clamped(round2(cx - half_w), round2(cy - half_h), round2(cx + half_w), round2(cy + half_h))
}

struct Trajectory {
    base_x: f64,
    base_y: f64,
    amp_x: f64,
    amp_y: f64,
    period_x: f64,
    period_y: f64,
    phase_x: f64,
    phase_y: f64,
}

impl Trajectory {
    fn random(rng: &mut ChaCha8Rng, base_x: f64, base_y: f64, w: f64, h: f64) -> Self {
        Self {
            base_x,
            base_y,
            amp_x: 0.08 * w,
            amp_y: 0.08 * h,
            period_x: rng.random_range(60.0..140.0),
            period_y: rng.random_range(50.0..120.0),
            phase_x: rng.random_range(0.0..TAU),
            phase_y: rng.random_range(0.0..TAU),
        }
    }

    fn at(&self, t: u64) -> (f64, f64) {
        let t = t as f64;
        (
            self.base_x + self.amp_x * (TAU * t / self.period_x + self.phase_x).sin(),
            self.base_y + self.amp_y * (TAU * t / self.period_y + self.phase_y).sin(),
        )
    }
}

struct Span {
    start: u64,
    end: u64,
    side: Side,
    class_id: u32,
    iou: f64,
}

/// Offset of an equal-size square whose IoU with the original is `iou` when
/// shifted by `d` along both axes: overlap `(s - d)^2 = 2 s^2 iou / (1 + iou)`.
fn diagonal_offset(size: f64, iou: f64) -> f64 {
    size - size * (2.0 * iou / (1.0 + iou)).sqrt()
}

fn video_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn generate_video(p: &SynthParams, seed: u64, index: usize) -> AnnotatedVideo {
    let mut rng = ChaCha8Rng::seed_from_u64(video_seed(seed, index));
    let (w, h) = (f64::from(p.width), f64::from(p.height));
    let half = (0.125 * w).round() / 2.0;
    let left = Trajectory::random(&mut rng, 0.25 * w, 0.68 * h, w, h);
    let right = Trajectory::random(&mut rng, 0.75 * w, 0.68 * h, w, h);

    let n = p.frames_per_video;
    let c = p.contacts_per_video as u64;
    let mut spans = Vec::new();
    if let Some(seg) = n.checked_div(c) {
        for j in 0..c {
            let (lo, hi) = p.span_frames;
            let len = rng.random_range(lo..=hi).min(seg.saturating_sub(4)).max(1);
            let slack = seg.saturating_sub(len + 2).max(2);
            let start = j * seg + rng.random_range(1..slack);
            let side = if rng.random_bool(0.5) { Side::Left } else { Side::Right };
            let class_id = rng.random_range(1..=p.n_classes.max(1));
            let level = p.overlap_ious[(index * p.contacts_per_video + j as usize) % p.overlap_ious.len()];
            spans.push(Span { start, end: (start + len).min(n), side, class_id, iou: level });
        }
    }

    let distractors: Vec<(f64, f64, u32)> = (0..p.distractors)
        .map(|k| {
            let x = (k as f64 + 0.5) * w / p.distractors as f64;
            let speed = rng.random_range(-0.4..0.4);
            (x, speed, rng.random_range(1..=p.n_classes.max(1)))
        })
        .collect();

    let mut frames = BTreeMap::new();
    let mut script = BTreeMap::new();
    for t in 0..n {
        let hand_box = |side: Side| {
            let (cx, cy) = if side == Side::Left { left.at(t) } else { right.at(t) };
            square(cx, cy, half, half)
        };
        let active = spans.iter().find(|s| s.start <= t && t < s.end);
        let mut hands = Vec::with_capacity(2);
        let mut objects = Vec::new();
        for side in [Side::Left, Side::Right] {
            let bbox = hand_box(side);
            let in_contact = active.is_some_and(|s| s.side == side);
            hands.push(GtHand {
                bbox,
                side,
                state: if in_contact { ContactState::Contact } else { ContactState::NoContact },
            });
            if let (true, Some(s)) = (in_contact, active) {
                let d = diagonal_offset(2.0 * half, s.iou);
                let dx = if side == Side::Left { d } else { -d };
                let (cx, cy) = bbox.centroid();
                objects.push(GtObject { bbox: square(cx + dx, cy - d, half, half), class_id: s.class_id, hand: side });
            }
        }
        let contact_point = active.is_some_and(|s| s.start == t);

        let mut detections: Vec<Detection> = hands
            .iter()
            .map(|g| Detection::hand(g.bbox, 1.0).expect("valid"))
            .collect();
        detections.extend(objects.iter().map(|o| Detection::object(o.bbox, o.class_id, 1.0).expect("valid")));
        for &(x, speed, class_id) in &distractors {
            let cx = (x + speed * t as f64).rem_euclid(w - 0.1 * w) + 0.05 * w;
            let b = square(cx, 0.02 * h + 0.05 * h, 0.04 * w, 0.05 * h);
            detections.push(Detection::object(b, class_id, 1.0).expect("valid"));
        }

        frames.insert(t, FrameAnnotation { frame_index: t, hands, active_objects: objects, contact_point });
        script.insert(t, ScriptFrame { frame_index: t, contact: None, detections });
    }

    let id = format!("v{index:03}");
    let entry = VideoEntry {
        video_id: id.clone(),
        n_frames: n,
        fps: p.fps,
        width: p.width,
        height: p.height,
        annotations: format!("annotations/{id}.jsonl"),
        frames: p.images.then(|| format!("frames/{id}/{{frame:06}}.jpg")),
        script: Some(format!("scripts/{id}.jsonl")),
    };
    AnnotatedVideo { entry, frames, script: Some(script) }
}

/// Builds the corpus in memory. `root` is recorded but nothing is written.
pub fn generate(params: &SynthParams, seed: u64, root: &Path) -> Corpus {
    let videos: Vec<AnnotatedVideo> = (0..params.videos).map(|i| generate_video(params, seed, i)).collect();
    Corpus {
        root: root.to_path_buf(),
        manifest: CorpusManifest { schema_version: SCHEMA_VERSION, videos: videos.iter().map(|v| v.entry.clone()).collect() },
        videos,
    }
}

fn fill(img: &mut RgbImage, b: &BBox, color: Rgb<u8>) {
    let (x0, y0) = (b.x_min().floor() as u32, b.y_min().floor() as u32);
    let x1 = (b.x_max().ceil() as u32).min(img.width());
    let y1 = (b.y_max().ceil() as u32).min(img.height());
    for y in y0.min(y1)..y1 {
        for x in x0.min(x1)..x1 {
            img.put_pixel(x, y, color);
        }
    }
}

fn render_frame(entry: &VideoEntry, script: &ScriptFrame) -> Vec<u8> {
    let mut img = RgbImage::from_pixel(entry.width, entry.height, Rgb([96, 96, 104]));
    for d in script.detections.iter().filter(|d| !d.is_hand()) {
        let shade = (40 + (d.class_id * 23) % 200) as u8;
        fill(&mut img, &d.bbox, Rgb([shade, 90, 200]));
    }
    for d in script.detections.iter().filter(|d| d.is_hand()) {
        fill(&mut img, &d.bbox, Rgb([224, 172, 140]));
    }
    let mut out = Vec::new();
    image::codecs::jpeg::JpegEncoder::new_with_quality(&mut out, 80)
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)
        .expect("in-memory encode");
    out
}

/// Generates a corpus, writes it under `root` and loads it back.
///
/// Output is byte-reproducible for a given `(params, seed)`.
pub fn synth_corpus(params: &SynthParams, seed: u64, root: impl AsRef<Path>) -> Result<Corpus, DatasetError> {
    let root = root.as_ref();
    let corpus = generate(params, seed, root);
    write_corpus(&corpus, root)?;
    if params.images {
        for v in &corpus.videos {
            let script = v.script.as_ref().expect("synthetic videos carry a script");
            for (t, frame) in script {
                let path = root.join(v.entry.frame_path(*t).expect("image pattern"));
                if let Some(dir) = path.parent() {
                    std::fs::create_dir_all(dir).map_err(|source| DatasetError::Io { path: dir.to_path_buf(), source })?;
                }
                std::fs::write(&path, render_frame(&v.entry, frame))
                    .map_err(|source| DatasetError::Io { path: path.clone(), source })?;
            }
        }
    }
    load_corpus(root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{hand_side, iou};

    #[test]
    fn offset_hits_target_iou() {
        for t in [0.02, 0.1, 0.4, 0.9] {
            let d = diagonal_offset(80.0, t);
            let a = BBox::new(100.0, 100.0, 180.0, 180.0).unwrap();
            let b = a.translated(d, d);
            assert!((iou(&a, &b) - t).abs() < 1e-9, "{t}");
        }
    }

    #[test]
    fn default_corpus_shape() {
        let c = generate(&SynthParams::default(), 7, Path::new("."));
        assert_eq!(c.videos.len(), 3);
        assert_eq!(c.total_frames(), 300);
        assert_eq!(c.total_contact_points(), 12);
        for v in &c.videos {
            let g = v.entry.geometry();
            for f in v.frames.values() {
                for h in &f.hands {
                    assert_eq!(hand_side(&h.bbox, g), h.side);
                }
                for o in &f.active_objects {
                    let h = f.hands.iter().find(|h| h.side == o.hand).unwrap();
                    assert!(iou(&h.bbox, &o.bbox) > 0.015);
                }
            }
            let script = v.script.as_ref().unwrap();
            for (t, s) in script {
                let hands: Vec<_> = s.detections.iter().filter(|d| d.is_hand()).collect();
                for d in s.detections.iter().filter(|d| !d.is_hand()) {
                    let active = v.frames[t].active_objects.iter().any(|o| o.bbox == d.bbox);
                    if !active {
                        assert!(hands.iter().all(|h| iou(&h.bbox, &d.bbox) == 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn equal_seeds_equal_corpora() {
        let p = SynthParams::default();
        assert_eq!(generate(&p, 11, Path::new(".")), generate(&p, 11, Path::new(".")));
        assert_ne!(generate(&p, 11, Path::new(".")).videos, generate(&p, 12, Path::new(".")).videos);
    }
}
