use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::{Corpus, DatasetError, VideoEntry};
use crate::backends::{FrameInput, FramePayload};

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayFrame {
    pub frame_index: u64,
    /// Stream time in seconds, `frame_index / fps`.
    pub timestamp: f64,
    pub payload: FramePayload,
}

impl ReplayFrame {
    pub fn input(&self) -> FrameInput {
        FrameInput { frame_index: self.frame_index, payload: self.payload.clone() }
    }
}

impl From<ReplayFrame> for FrameInput {
    fn from(f: ReplayFrame) -> Self {
        FrameInput { frame_index: f.frame_index, payload: f.payload }
    }
}

/// Paced frame source for one video.
///
/// Frame `k` is released no earlier than `k / (fps * speed)` seconds after the
/// first call to `next`. Pacing is against absolute deadlines, so sleep jitter
/// does not accumulate. An infinite speed emits frames as fast as consumed.
#[derive(Debug)]
pub struct Replay {
    entry: VideoEntry,
    root: PathBuf,
    next: u64,
    interval: Option<Duration>,
    start: Option<Instant>,
}

impl Replay {
    pub fn entry(&self) -> &VideoEntry {
        &self.entry
    }

    fn payload(&self, frame: u64) -> Result<FramePayload, DatasetError> {
        let Some(rel) = self.entry.frame_path(frame) else {
            return Ok(FramePayload::Tick);
        };
        let path = self.root.join(rel);
        match std::fs::read(&path) {
            Ok(bytes) => Ok(FramePayload::Encoded(Arc::from(bytes))),
            Err(_) => Err(DatasetError::MissingFrameFile { video: self.entry.video_id.clone(), frame, path }),
        }
    }
}

impl Iterator for Replay {
    type Item = Result<ReplayFrame, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.entry.n_frames {
            return None;
        }
        let frame = self.next;
        self.next += 1;
        if let Some(interval) = self.interval {
            let start = *self.start.get_or_insert_with(Instant::now);
            let due = start + interval.mul_f64(frame as f64);
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        let timestamp = frame as f64 / self.entry.fps;
        Some(self.payload(frame).map(|payload| ReplayFrame { frame_index: frame, timestamp, payload }))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.entry.n_frames - self.next) as usize;
        (left, Some(left))
    }
}

/// Starts replaying `video_id` at `speed` times its native rate.
pub fn replay(corpus: &Corpus, video_id: &str, speed: f64) -> Result<Replay, DatasetError> {
    let video = corpus.video(video_id)?;
    let interval = if speed.is_finite() && speed > 0.0 {
        Some(Duration::from_secs_f64(1.0 / (video.entry.fps * speed)))
    } else {
        None
    };
    Ok(Replay { entry: video.entry.clone(), root: corpus.root.clone(), next: 0, interval, start: None })
}
