//! Backend selection by name, shared by the evaluation driver and the server.
//!
//! Accepted forms: `oracle`, `scripted`, `external:tcp://host:port`,
//! `external:cmd:program args`.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::external::ExternalOptions;
use super::{
    derive_seed, BackendError, BackendScript, Detector, Endpoint, ExternalDetector, ExternalRecognizer, NoiseModel,
    OracleDetector, OracleRecognizer, Recognizer, RecognizerNoise, ScriptedDetector, ScriptedRecognizer,
};
use crate::dataset::AnnotatedVideo;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Oracle,
    Scripted,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendSpec {
    pub kind: BackendKind,
    pub endpoint: Option<Endpoint>,
}

impl FromStr for BackendSpec {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(Self { kind: BackendKind::Oracle, endpoint: None }),
            "scripted" => Ok(Self { kind: BackendKind::Scripted, endpoint: None }),
            _ => match s.strip_prefix("external:") {
                Some(ep) => Ok(Self { kind: BackendKind::External, endpoint: Some(ep.parse()?) }),
                None => Err(BackendError::Spec(format!("unknown backend {s:?}; expected oracle, scripted or external:<endpoint>"))),
            },
        }
    }
}

impl std::fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (&self.kind, &self.endpoint) {
            (BackendKind::Oracle, _) => f.write_str("oracle"),
            (BackendKind::Scripted, _) => f.write_str("scripted"),
            (BackendKind::External, Some(Endpoint::Tcp(a))) => write!(f, "external:tcp://{a}"),
            (BackendKind::External, Some(Endpoint::Command(argv))) => write!(f, "external:cmd:{}", argv.join(" ")),
            (BackendKind::External, None) => f.write_str("external:?"),
        }
    }
}

/// Everything needed to build a recognizer and a detector for one video.
#[derive(Debug, Clone, Default)]
pub struct BackendSetup {
    pub recognizer: Option<BackendSpec>,
    pub detector: Option<BackendSpec>,
    pub recognizer_noise: RecognizerNoise,
    pub detector_noise: NoiseModel,
    pub external: ExternalOptions,
    pub seed: u64,
}

impl BackendSetup {
    pub fn new(recognizer: BackendSpec, detector: BackendSpec) -> Self {
        Self { recognizer: Some(recognizer), detector: Some(detector), ..Default::default() }
    }

    /// Scripted recognizers use the script's contact confidences when the
    /// script carries them, and otherwise derive noisy predictions from the
    /// annotated contact points.
    pub fn build_recognizer(&self, video: &AnnotatedVideo) -> Result<Box<dyn Recognizer>, BackendError> {
        let spec = self.recognizer.as_ref().ok_or_else(|| BackendError::Spec("no recognizer configured".into()))?;
        let id = &video.entry.video_id;
        Ok(match spec.kind {
            BackendKind::Oracle => Box::new(OracleRecognizer::new(video)),
            BackendKind::Scripted => {
                let scripted = BackendScript::from_video(video)
                    .filter(|s| s.frames.values().any(|f| f.contact.is_some()));
                match scripted {
                    Some(s) => Box::new(ScriptedRecognizer::from_script(&s, self.recognizer_noise.decision_threshold)),
                    None => Box::new(ScriptedRecognizer::synthetic(
                        &video.contact_points(),
                        video.entry.n_frames,
                        &self.recognizer_noise,
                        derive_seed(self.seed, &format!("recognizer/{id}")),
                    )?),
                }
            }
            BackendKind::External => {
                Box::new(ExternalRecognizer::connect(spec.endpoint.as_ref().expect("parsed with endpoint"), &self.external)?)
            }
        })
    }

    pub fn build_detector(&self, video: &AnnotatedVideo) -> Result<Box<dyn Detector>, BackendError> {
        let spec = self.detector.as_ref().ok_or_else(|| BackendError::Spec("no detector configured".into()))?;
        let id = &video.entry.video_id;
        Ok(match spec.kind {
            BackendKind::Oracle => Box::new(OracleDetector::new(video)),
            BackendKind::Scripted => {
                let script = BackendScript::from_video(video)
                    .ok_or_else(|| BackendError::Spec(format!("video {id} has no detector script")))?;
                Box::new(ScriptedDetector::new(script, self.detector_noise, derive_seed(self.seed, &format!("detector/{id}")))?)
            }
            BackendKind::External => {
                Box::new(ExternalDetector::connect(spec.endpoint.as_ref().expect("parsed with endpoint"), &self.external)?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        for s in ["oracle", "scripted", "external:tcp://127.0.0.1:7000", "external:cmd:python3 m.py"] {
            assert_eq!(s.parse::<BackendSpec>().unwrap().to_string(), s);
        }
        assert!("yolo".parse::<BackendSpec>().is_err());
        assert!("external:udp://x".parse::<BackendSpec>().is_err());
    }
}
