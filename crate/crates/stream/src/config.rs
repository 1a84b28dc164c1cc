use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use egohoi_core::CascadeConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    /// Decoded batches waiting for the duplicator.
    pub ingest_capacity: usize,
    /// Frames waiting for the model worker. Never drops; full means ingest blocks.
    pub model_capacity: usize,
    /// Frames waiting for the visualization tap. Drops the oldest when full.
    pub visualization_capacity: usize,
    /// Frames per model-worker group.
    pub group_size: usize,
    /// How long a partial group waits for more frames.
    pub linger_ms: u64,
    pub max_batch_frames: usize,
    /// Request body limit for `POST /batch`.
    pub max_body_bytes: usize,
    /// Directory for annotated frame dumps; none disables the tap.
    pub tap_dir: Option<PathBuf>,
    pub cascade: CascadeConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            ingest_capacity: 4,
            model_capacity: 120,
            visualization_capacity: 30,
            group_size: 30,
            linger_ms: 100,
            max_batch_frames: 60,
            max_body_bytes: 64 * 1024 * 1024,
            tap_dir: None,
            cascade: CascadeConfig::default(),
        }
    }
}

impl ServiceConfig {
    pub fn linger(&self) -> Duration {
        Duration::from_millis(self.linger_ms)
    }

    pub fn validate(&self) -> Result<(), String> {
        let sizes = [
            ("ingest_capacity", self.ingest_capacity),
            ("model_capacity", self.model_capacity),
            ("visualization_capacity", self.visualization_capacity),
            ("group_size", self.group_size),
            ("max_batch_frames", self.max_batch_frames),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(format!("{name} must be positive"));
        }
        self.cascade.validate().map_err(|e| e.to_string())
    }
}
