//! Corpus format, loading, replay and synthetic corpus generation.
//!
//! A corpus is a directory:
//!
//! ```text
//! manifest.json                 videos and their properties
//! annotations/<video>.jsonl     header line + one frame annotation per line
//! scripts/<video>.jsonl         optional scripted detector outputs
//! frames/<video>/...            optional frame images
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

mod convert;
mod replay;
mod schema;
pub mod synth;

pub use convert::{convert, AnnotationSource, NativeExport};
pub use replay::{replay, Replay, ReplayFrame};
pub use schema::{
    AnnotatedVideo, CorpusManifest, FileHeader, FrameAnnotation, ScriptFrame, VideoEntry, SCHEMA_VERSION,
};
pub use synth::{synth_corpus, SynthParams};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Schema { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: frame {frame} annotated twice")]
    DuplicateFrame { path: PathBuf, line: usize, frame: u64 },
    #[error("{path}:{line}: frame {frame}: active object linked to absent {side} hand")]
    DanglingLink { path: PathBuf, line: usize, frame: u64, side: crate::geometry::Side },
    #[error("unknown video {0:?}")]
    UnknownVideo(String),
    #[error("frame {frame} of video {video}: missing image {path}")]
    MissingFrameFile { video: String, frame: u64, path: PathBuf },
    #[error("corpus has no videos")]
    Empty,
    #[error("{0}")]
    Unsupported(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

fn schema_err(path: &Path, line: usize, message: impl ToString) -> DatasetError {
    DatasetError::Schema { path: path.to_path_buf(), line, message: message.to_string() }
}

/// A loaded, validated corpus. Immutable once loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub root: PathBuf,
    pub manifest: CorpusManifest,
    pub videos: Vec<AnnotatedVideo>,
}

impl Corpus {
    pub fn video(&self, id: &str) -> Result<&AnnotatedVideo, DatasetError> {
        self.videos
            .iter()
            .find(|v| v.entry.video_id == id)
            .ok_or_else(|| DatasetError::UnknownVideo(id.to_string()))
    }

    pub fn total_frames(&self) -> u64 {
        self.videos.iter().map(|v| v.entry.n_frames).sum()
    }

    pub fn total_contact_points(&self) -> usize {
        self.videos.iter().map(|v| v.contact_points().len()).sum()
    }

    /// SHA-256 over the canonical JSON form of the parsed structure.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.manifest).expect("serializable"));
        for v in &self.videos {
            for f in v.frames.values() {
                h.update(serde_json::to_vec(f).expect("serializable"));
            }
            if let Some(s) = &v.script {
                for f in s.values() {
                    h.update(serde_json::to_vec(f).expect("serializable"));
                }
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn read_lines<T: DeserializeOwned>(
    path: &Path,
    video_id: &str,
    mut each: impl FnMut(usize, T) -> Result<(), DatasetError>,
) -> Result<(), DatasetError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let header: FileHeader = match lines.next() {
        Some((_, line)) => serde_json::from_str(&line.map_err(io_err(path))?)
            .map_err(|e| schema_err(path, 1, format!("bad header: {e}")))?,
        None => return Err(schema_err(path, 1, "empty file, expected a header line")),
    };
    if header.schema_version != SCHEMA_VERSION {
        return Err(schema_err(path, 1, format!("unsupported schema_version {}", header.schema_version)));
    }
    if header.video_id != video_id {
        return Err(schema_err(path, 1, format!("header names video {:?}, manifest says {video_id:?}", header.video_id)));
    }
    for (i, line) in lines {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| schema_err(path, i + 1, e))?;
        each(i + 1, record)?;
    }
    Ok(())
}

fn validate_frame(path: &Path, line: usize, entry: &VideoEntry, f: &FrameAnnotation) -> Result<(), DatasetError> {
    if f.frame_index >= entry.n_frames {
        return Err(schema_err(path, line, format!("frame {} beyond n_frames {}", f.frame_index, entry.n_frames)));
    }
    for o in &f.active_objects {
        if !f.hands.iter().any(|h| h.side == o.hand) {
            return Err(DatasetError::DanglingLink { path: path.to_path_buf(), line, frame: f.frame_index, side: o.hand });
        }
        if o.class_id == crate::geometry::HAND_CLASS_ID {
            return Err(schema_err(path, line, "active object uses the reserved hand class id"));
        }
    }
    if f.contact_point && !f.has_contact() {
        return Err(schema_err(path, line, format!("frame {} is a contact point without a hand in contact", f.frame_index)));
    }
    Ok(())
}

fn validate_entry(path: &Path, v: &VideoEntry) -> Result<(), DatasetError> {
    let line = 1;
    if !(v.fps > 0.0 && v.fps.is_finite()) {
        return Err(schema_err(path, line, format!("video {}: fps must be positive", v.video_id)));
    }
    if v.n_frames == 0 {
        return Err(schema_err(path, line, format!("video {}: n_frames must be positive", v.video_id)));
    }
    if v.width == 0 || v.height == 0 {
        return Err(schema_err(path, line, format!("video {}: empty image geometry", v.video_id)));
    }
    Ok(())
}

/// Loads and validates a corpus directory.
pub fn load_corpus(root: impl AsRef<Path>) -> Result<Corpus, DatasetError> {
    let root = root.as_ref();
    let manifest_path = root.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: CorpusManifest = serde_json::from_str(&text)
        .map_err(|e| schema_err(&manifest_path, e.line(), e))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(schema_err(&manifest_path, 1, format!("unsupported schema_version {}", manifest.schema_version)));
    }
    if manifest.videos.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut seen = HashSet::new();
    let mut videos = Vec::with_capacity(manifest.videos.len());
    for entry in &manifest.videos {
        validate_entry(&manifest_path, entry)?;
        if !seen.insert(entry.video_id.as_str()) {
            return Err(schema_err(&manifest_path, 1, format!("duplicate video id {:?}", entry.video_id)));
        }
        let path = root.join(&entry.annotations);
        let mut frames = BTreeMap::new();
        read_lines(&path, &entry.video_id, |line, f: FrameAnnotation| {
            validate_frame(&path, line, entry, &f)?;
            let frame = f.frame_index;
            if frames.insert(frame, f).is_some() {
                return Err(DatasetError::DuplicateFrame { path: path.clone(), line, frame });
            }
            Ok(())
        })?;
        let script = match &entry.script {
            Some(rel) => {
                let path = root.join(rel);
                let mut map = BTreeMap::new();
                read_lines(&path, &entry.video_id, |line, f: ScriptFrame| {
                    let frame = f.frame_index;
                    if map.insert(frame, f).is_some() {
                        return Err(DatasetError::DuplicateFrame { path: path.clone(), line, frame });
                    }
                    Ok(())
                })?;
                Some(map)
            }
            None => None,
        };
        videos.push(AnnotatedVideo { entry: entry.clone(), frames, script });
    }
    Ok(Corpus { root: root.to_path_buf(), manifest, videos })
}

fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    header: &FileHeader,
    rows: impl IntoIterator<Item = &'a T>,
) -> Result<(), DatasetError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: Vec<u8>| -> std::io::Result<()> {
        w.write_all(&bytes)?;
        w.write_all(b"\n")
    };
    put(serde_json::to_vec(header).expect("serializable")).map_err(io_err(path))?;
    for r in rows {
        put(serde_json::to_vec(r).expect("serializable")).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes the manifest and per-video files. Frame images are not touched.
pub fn write_corpus(corpus: &Corpus, root: impl AsRef<Path>) -> Result<(), DatasetError> {
    let root = root.as_ref();
    fs::create_dir_all(root).map_err(io_err(root))?;
    let manifest_path = root.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&corpus.manifest).expect("serializable");
    text.push('\n');
    fs::write(&manifest_path, text).map_err(io_err(&manifest_path))?;
    for v in &corpus.videos {
        let header = FileHeader { schema_version: SCHEMA_VERSION, video_id: v.entry.video_id.clone() };
        write_jsonl(&root.join(&v.entry.annotations), &header, v.frames.values())?;
        if let (Some(rel), Some(script)) = (&v.entry.script, &v.script) {
            write_jsonl(&root.join(rel), &header, script.values())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MANIFEST: &str = r#"{"schema_version":1,"videos":[{"video_id":"v0","n_frames":50,"fps":30.0,"width":640,"height":480,"annotations":"annotations/v0.jsonl"}]}"#;
    const HEADER: &str = r#"{"schema_version":1,"video_id":"v0"}"#;

    fn corpus_with(lines: &[&str]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), MANIFEST).unwrap();
        fs::create_dir_all(dir.path().join("annotations")).unwrap();
        let mut body = vec![HEADER];
        body.extend_from_slice(lines);
        fs::write(dir.path().join("annotations/v0.jsonl"), body.join("\n")).unwrap();
        dir
    }

    const FRAME: &str = r#"{"frame_index":7,"hands":[{"bbox":[10,200,90,280],"side":"left","state":"contact"}],"active_objects":[{"bbox":[40,180,120,260],"class_id":2,"hand":"left"}],"contact_point":true}"#;

    #[test]
    fn minimal_corpus() {
        let dir = corpus_with(&[FRAME]);
        let c = load_corpus(dir.path()).unwrap();
        assert_eq!(c.videos.len(), 1);
        assert_eq!(c.videos[0].entry.n_frames, 50);
        assert_eq!(c.videos[0].contact_points(), vec![7]);
    }

    #[test]
    fn dangling_link_names_frame() {
        let bad = FRAME.replace(r#""hand":"left""#, r#""hand":"right""#);
        let dir = corpus_with(&[&bad]);
        let err = load_corpus(dir.path()).unwrap_err();
        assert!(matches!(err, DatasetError::DanglingLink { frame: 7, line: 2, .. }), "{err}");
        assert!(err.to_string().contains("frame 7"));
    }

    #[test]
    fn duplicate_frame_rejected() {
        let dir = corpus_with(&[FRAME, FRAME]);
        assert!(matches!(load_corpus(dir.path()), Err(DatasetError::DuplicateFrame { frame: 7, line: 3, .. })));
    }

    #[test]
    fn schema_errors_carry_line() {
        let dir = corpus_with(&[FRAME, r#"{"frame_index":"x"}"#]);
        let err = load_corpus(dir.path()).unwrap_err();
        assert!(matches!(err, DatasetError::Schema { line: 3, .. }), "{err}");

        let dir = corpus_with(&[&FRAME.replace("\"frame_index\":7", "\"frame_index\":70")]);
        assert!(matches!(load_corpus(dir.path()), Err(DatasetError::Schema { line: 2, .. })));

        let no_contact = FRAME.replace(r#""state":"contact""#, r#""state":"no_contact""#);
        let dir = corpus_with(&[&no_contact]);
        assert!(load_corpus(dir.path()).is_err());
    }

    #[test]
    fn empty_or_duplicate_videos() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), r#"{"schema_version":1,"videos":[]}"#).unwrap();
        assert!(matches!(load_corpus(dir.path()), Err(DatasetError::Empty)));

        let dir = corpus_with(&[FRAME]);
        let video = r#"{"video_id":"v0","n_frames":50,"fps":30.0,"width":640,"height":480,"annotations":"annotations/v0.jsonl"}"#;
        let twice = format!(r#"{{"schema_version":1,"videos":[{video},{video}]}}"#);
        fs::write(dir.path().join(MANIFEST_FILE), twice).unwrap();
        let err = load_corpus(dir.path()).unwrap_err();
        assert!(err.to_string().contains("duplicate video id"), "{err}");
    }

    #[test]
    fn frame_pattern_expansion() {
        assert_eq!(schema::expand_pattern("f/{frame:06}.jpg", 42), "f/000042.jpg");
        assert_eq!(schema::expand_pattern("f/{frame}.png", 42), "f/42.png");
        assert_eq!(schema::expand_pattern("static.jpg", 3), "static.jpg");
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = corpus_with(&[FRAME]);
        let c = load_corpus(dir.path()).unwrap();
        let out = tempfile::tempdir().unwrap();
        write_corpus(&c, out.path()).unwrap();
        let back = load_corpus(out.path()).unwrap();
        assert_eq!(back.manifest, c.manifest);
        assert_eq!(back.videos, c.videos);
        assert_eq!(back.checksum(), c.checksum());
    }
}
