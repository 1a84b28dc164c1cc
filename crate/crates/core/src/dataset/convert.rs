//! Conversion of foreign annotation formats into a corpus directory.
//!
//! A converter implements [`AnnotationSource`]; [`convert`] writes the
//! corpus and loads it back, so every converted corpus passes the same
//! validation as a hand-written one.

use std::path::{Path, PathBuf};

use super::{load_corpus, write_corpus, AnnotatedVideo, Corpus, CorpusManifest, DatasetError, SCHEMA_VERSION};

pub trait AnnotationSource {
    /// Videos in output order, with annotations and optional scripts filled in.
    fn videos(&self) -> Result<Vec<AnnotatedVideo>, DatasetError>;
}

pub fn convert(source: &dyn AnnotationSource, out: impl AsRef<Path>) -> Result<Corpus, DatasetError> {
    let out = out.as_ref();
    let videos = source.videos()?;
    if videos.is_empty() {
        return Err(DatasetError::Empty);
    }
    let manifest = CorpusManifest {
        schema_version: SCHEMA_VERSION,
        videos: videos.iter().map(|v| v.entry.clone()).collect(),
    };
    write_corpus(&Corpus { root: out.to_path_buf(), manifest, videos }, out)?;
    load_corpus(out)
}

/// Placeholder for the native per-frame annotation export. Not implemented.
#[derive(Debug, Clone)]
pub struct NativeExport {
    pub root: PathBuf,
}

impl AnnotationSource for NativeExport {
    fn videos(&self) -> Result<Vec<AnnotatedVideo>, DatasetError> {
        Err(DatasetError::Unsupported(format!("{}: native annotation export is not supported yet", self.root.display())))
    }
}
