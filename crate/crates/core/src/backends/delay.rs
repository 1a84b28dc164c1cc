use std::time::Duration;

use super::{BackendError, Detector, FrameInput, LatencyClass, Recognizer};
use crate::cascade::ContactPrediction;
use crate::geometry::Detection;

/// Adds a fixed artificial delay to every call of the wrapped backend.
#[derive(Debug, Clone)]
pub struct Delayed<B> {
    inner: B,
    delay: Duration,
}

impl<B> Delayed<B> {
    pub fn new(inner: B, delay: Duration) -> Self {
        Self { inner, delay }
    }

    pub fn into_inner(self) -> B {
        self.inner
    }

    fn pause(&self) {
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
    }
}

impl<B: Recognizer> Recognizer for Delayed<B> {
    fn feed(&mut self, frame: &FrameInput) -> Result<ContactPrediction, BackendError> {
        self.pause();
        self.inner.feed(frame)
    }

    fn latency_class(&self) -> LatencyClass {
        LatencyClass::Bounded(self.delay)
    }
}

impl<B: Detector> Detector for Delayed<B> {
    fn detect(&mut self, frame: &FrameInput) -> Result<Vec<Detection>, BackendError> {
        self.pause();
        self.inner.detect(frame)
    }

    fn latency_class(&self) -> LatencyClass {
        LatencyClass::Bounded(self.delay)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::OracleRecognizer;
    use std::time::Instant;

    #[test]
    fn delays_and_forwards() {
        let mut r = Delayed::new(OracleRecognizer::from_contacts([1], 3), Duration::from_millis(20));
        let t = Instant::now();
        assert!(r.feed(&FrameInput::tick(1)).unwrap().is_contact());
        assert!(t.elapsed() >= Duration::from_millis(20));
        assert_eq!(r.latency_class(), LatencyClass::Bounded(Duration::from_millis(20)));
    }
}
