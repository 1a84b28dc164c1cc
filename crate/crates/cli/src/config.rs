//! Experiment configuration: command-line flags merged with an optional TOML
//! file. Values present in the file take precedence over flags.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use egohoi_core::backends::{BackendSpec, ExternalOptions, NoiseModel, RecognizerNoise};
use egohoi_core::metrics::report::TriggerMode;
use egohoi_core::metrics::{PapThresholds, DEFAULT_BOX_IOU_MATCH};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Parses `oracle`, `window@N` or a bare frame count `N`.
pub fn parse_trigger(s: &str) -> Result<TriggerMode, ConfigError> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("oracle") {
        return Ok(TriggerMode::Oracle);
    }
    let n = s.strip_prefix("window@").unwrap_or(s);
    n.parse::<u64>()
        .map(|frames| TriggerMode::Window { frames })
        .map_err(|_| ConfigError::Invalid(format!("trigger {s:?} must be oracle, window@N or N")))
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub corpus: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub recognizer: Option<String>,
    pub detector: Option<String>,
    pub iou_thresholds: Option<Vec<f64>>,
    pub triggers: Option<Vec<String>>,
    pub pap_thresholds_s: Option<Vec<f64>>,
    pub box_iou_match: Option<f64>,
    pub max_hands: Option<usize>,
    pub recognizer_noise: Option<RecognizerNoise>,
    pub detector_noise: Option<NoiseModel>,
    pub external_timeout_ms: Option<u64>,
    pub taxonomy: Option<Vec<String>>,
}

impl ExperimentFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let mut file: Self =
            toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.into(), message: e.to_string() })?;
        // relative paths in a config file are relative to the file
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut file.corpus, &mut file.output].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(file)
    }

    /// Fills every field left empty here from `flags`.
    pub fn or(self, flags: ExperimentFile) -> ExperimentFile {
        ExperimentFile {
            corpus: self.corpus.or(flags.corpus),
            output: self.output.or(flags.output),
            seed: self.seed.or(flags.seed),
            recognizer: self.recognizer.or(flags.recognizer),
            detector: self.detector.or(flags.detector),
            iou_thresholds: self.iou_thresholds.or(flags.iou_thresholds),
            triggers: self.triggers.or(flags.triggers),
            pap_thresholds_s: self.pap_thresholds_s.or(flags.pap_thresholds_s),
            box_iou_match: self.box_iou_match.or(flags.box_iou_match),
            max_hands: self.max_hands.or(flags.max_hands),
            recognizer_noise: self.recognizer_noise.or(flags.recognizer_noise),
            detector_noise: self.detector_noise.or(flags.detector_noise),
            external_timeout_ms: self.external_timeout_ms.or(flags.external_timeout_ms),
            taxonomy: self.taxonomy.or(flags.taxonomy),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub corpus: PathBuf,
    pub output: PathBuf,
    pub seed: u64,
    pub recognizer: BackendSpec,
    pub detector: BackendSpec,
    pub iou_thresholds: Vec<f64>,
    pub triggers: Vec<TriggerMode>,
    pub pap_thresholds_s: Vec<f64>,
    pub box_iou_match: f64,
    pub max_hands: usize,
    pub recognizer_noise: RecognizerNoise,
    pub detector_noise: NoiseModel,
    pub external: ExternalOptions,
}

fn ascending(name: &str, v: &[f64]) -> Result<(), ConfigError> {
    if v.is_empty() {
        return Err(ConfigError::Invalid(format!("{name} must not be empty")));
    }
    if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ConfigError::Invalid(format!("{name} must be finite and strictly ascending, got {v:?}")));
    }
    Ok(())
}

impl TryFrom<ExperimentFile> for ExperimentConfig {
    type Error = ConfigError;

    fn try_from(f: ExperimentFile) -> Result<Self, Self::Error> {
        let corpus = f.corpus.ok_or_else(|| ConfigError::Invalid("a corpus path is required".into()))?;
        let spec = |s: Option<String>, default: &str| -> Result<BackendSpec, ConfigError> {
            s.as_deref().unwrap_or(default).parse().map_err(|e: egohoi_core::BackendError| ConfigError::Invalid(e.to_string()))
        };
        let iou_thresholds = f.iou_thresholds.unwrap_or_else(|| vec![0.01]);
        ascending("iou_thresholds", &iou_thresholds)?;
        if iou_thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(ConfigError::Invalid(format!("iou thresholds must lie in [0, 1], got {iou_thresholds:?}")));
        }
        let triggers = f
            .triggers
            .unwrap_or_else(|| vec!["oracle".into(), "30".into(), "60".into()])
            .iter()
            .map(|s| parse_trigger(s))
            .collect::<Result<Vec<_>, _>>()?;
        if triggers.is_empty() {
            return Err(ConfigError::Invalid("triggers must not be empty".into()));
        }
        let pap_thresholds_s = f.pap_thresholds_s.unwrap_or_else(|| (1..=10).map(f64::from).collect());
        ascending("pap_thresholds_s", &pap_thresholds_s)?;
        if pap_thresholds_s.iter().any(|s| *s < 0.0) {
            return Err(ConfigError::Invalid("p-AP thresholds must be non-negative".into()));
        }
        let box_iou_match = f.box_iou_match.unwrap_or(DEFAULT_BOX_IOU_MATCH);
        if !(box_iou_match > 0.0 && box_iou_match <= 1.0) {
            return Err(ConfigError::Invalid(format!("box_iou_match must lie in (0, 1], got {box_iou_match}")));
        }
        let max_hands = f.max_hands.unwrap_or(2);
        if max_hands == 0 {
            return Err(ConfigError::Invalid("max_hands must be positive".into()));
        }
        let recognizer_noise = f.recognizer_noise.unwrap_or_default();
        recognizer_noise.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let detector_noise = f.detector_noise.unwrap_or_default();
        detector_noise.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(Self {
            corpus,
            output: f.output.unwrap_or_else(|| PathBuf::from("results")),
            seed: f.seed.unwrap_or(0),
            recognizer: spec(f.recognizer, "scripted")?,
            detector: spec(f.detector, "scripted")?,
            iou_thresholds,
            triggers,
            pap_thresholds_s,
            box_iou_match,
            max_hands,
            recognizer_noise,
            detector_noise,
            external: ExternalOptions {
                timeout: Duration::from_millis(f.external_timeout_ms.unwrap_or(5000)),
                taxonomy: f.taxonomy.unwrap_or_default(),
                decision_threshold: recognizer_noise.decision_threshold,
            },
        })
    }
}

impl ExperimentConfig {
    pub fn pap_thresholds(&self, fps: f64) -> PapThresholds {
        PapThresholds::from_seconds(&self.pap_thresholds_s, fps).expect("validated non-empty")
    }
}
