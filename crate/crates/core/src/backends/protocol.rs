//! Wire protocol for external backends.
//!
//! Every message is a frame: a 4-byte big-endian unsigned length `N`
//! followed by `N` bytes of compact UTF-8 JSON. The JSON object carries a
//! `"type"` tag. One request is in flight per connection.
//!
//! ```text
//! client                              server
//!   hello {version, role, taxonomy} ->
//!                                   <- hello {version, role, taxonomy}
//!   infer {role, frame_index, image} ->
//!                                   <- result {frame_index, predictions}
//!                                      | error {frame_index, message}
//! ```

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Role;
use crate::geometry::Detection;

pub const PROTOCOL_VERSION: u32 = 1;

/// Largest accepted payload, in bytes.
pub const MAX_FRAME_LEN: u32 = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Message {
    Hello {
        version: u32,
        role: Role,
        /// Object class names, index = class id. Empty means "not checked".
        #[serde(default)]
        taxonomy: Vec<String>,
    },
    Infer {
        role: Role,
        frame_index: u64,
        image: Option<ImageRef>,
    },
    Result {
        frame_index: u64,
        predictions: Predictions,
    },
    Error {
        frame_index: Option<u64>,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ImageRef {
    Base64(String),
    Path(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Predictions {
    Contact { confidence: f64 },
    Detections(Vec<Detection>),
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("frame length {len} exceeds the {max}-byte limit")]
    Oversize { len: u32, max: u32 },
    #[error("payload is not valid UTF-8")]
    Encoding,
    #[error("payload does not match the message schema: {0}")]
    Schema(String),
    #[error("{0} unexpected bytes after the frame")]
    Trailing(usize),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

impl ProtocolError {
    /// Stable class name, used by the conformance vectors.
    pub fn class(&self) -> &'static str {
        match self {
            ProtocolError::Truncated { .. } => "truncated",
            ProtocolError::Oversize { .. } => "oversize",
            ProtocolError::Encoding => "encoding",
            ProtocolError::Schema(_) => "schema",
            ProtocolError::Trailing(_) => "trailing",
            ProtocolError::Io(_) => "io",
        }
    }
}

pub fn encode(msg: &Message) -> Vec<u8> {
    let body = serde_json::to_vec(msg).expect("messages always serialize");
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

fn parse_body(body: &[u8]) -> Result<Message, ProtocolError> {
    let text = std::str::from_utf8(body).map_err(|_| ProtocolError::Encoding)?;
    serde_json::from_str(text).map_err(|e| ProtocolError::Schema(e.to_string()))
}

fn check_len(len: u32) -> Result<usize, ProtocolError> {
    if len > MAX_FRAME_LEN {
        Err(ProtocolError::Oversize { len, max: MAX_FRAME_LEN })
    } else {
        Ok(len as usize)
    }
}

/// Decodes the first frame in `bytes`, returning it with the bytes consumed.
pub fn decode(bytes: &[u8]) -> Result<(Message, usize), ProtocolError> {
    let Some(head) = bytes.get(..4) else {
        return Err(ProtocolError::Truncated { needed: 4, available: bytes.len() });
    };
    let len = check_len(u32::from_be_bytes(head.try_into().expect("4 bytes")))?;
    let body = bytes
        .get(4..4 + len)
        .ok_or(ProtocolError::Truncated { needed: 4 + len, available: bytes.len() })?;
    Ok((parse_body(body)?, 4 + len))
}

/// Decodes a buffer holding exactly one frame.
pub fn decode_exact(bytes: &[u8]) -> Result<Message, ProtocolError> {
    let (msg, used) = decode(bytes)?;
    if used != bytes.len() {
        return Err(ProtocolError::Trailing(bytes.len() - used));
    }
    Ok(msg)
}

pub fn write_message<W: Write + ?Sized>(w: &mut W, msg: &Message) -> Result<(), ProtocolError> {
    w.write_all(&encode(msg))?;
    w.flush()?;
    Ok(())
}

fn read_full<R: Read + ?Sized>(r: &mut R, buf: &mut [u8], offset: usize) -> Result<usize, ProtocolError> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    if got < buf.len() && (got > 0 || offset > 0) {
        return Err(ProtocolError::Truncated { needed: offset + buf.len(), available: offset + got });
    }
    Ok(got)
}

/// Reads one frame. `Ok(None)` on a clean end of stream between frames.
pub fn read_message<R: Read + ?Sized>(r: &mut R) -> Result<Option<Message>, ProtocolError> {
    let mut head = [0u8; 4];
    if read_full(r, &mut head, 0)? == 0 {
        return Ok(None);
    }
    let len = check_len(u32::from_be_bytes(head))?;
    let mut body = vec![0u8; len];
    read_full(r, &mut body, 4)?;
    parse_body(&body).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;

    #[test]
    fn frame_layout() {
        let msg = Message::Error { frame_index: None, message: "x".into() };
        let bytes = encode(&msg);
        let body = br#"{"type":"error","frame_index":null,"message":"x"}"#;
        assert_eq!(&bytes[..4], &(body.len() as u32).to_be_bytes());
        assert_eq!(&bytes[4..], body);
        assert_eq!(decode_exact(&bytes).unwrap(), msg);
    }

    #[test]
    fn predictions_disambiguate() {
        let det = Detection::hand(BBox::new(1.0, 2.0, 3.0, 4.0).unwrap(), 0.5).unwrap();
        for p in [Predictions::Contact { confidence: 0.25 }, Predictions::Detections(vec![det]), Predictions::Detections(vec![])] {
            let m = Message::Result { frame_index: 3, predictions: p };
            assert_eq!(decode_exact(&encode(&m)).unwrap(), m);
        }
    }

    #[test]
    fn stream_reads() {
        let a = Message::Hello { version: 1, role: Role::Detector, taxonomy: vec![] };
        let mut buf = encode(&a);
        buf.extend(encode(&a));
        let mut r = io::Cursor::new(buf.clone());
        assert_eq!(read_message(&mut r).unwrap(), Some(a.clone()));
        assert_eq!(read_message(&mut r).unwrap(), Some(a));
        assert!(read_message(&mut r).unwrap().is_none());
        let mut cut = io::Cursor::new(buf[..buf.len() / 2 + 3].to_vec());
        read_message(&mut cut).unwrap();
        assert_eq!(read_message(&mut cut).unwrap_err().class(), "truncated");
    }

    #[test]
    fn error_classes() {
        assert_eq!(decode(&[0, 0]).unwrap_err().class(), "truncated");
        assert_eq!(decode(&[0xff, 0, 0, 0]).unwrap_err().class(), "oversize");
        assert_eq!(decode(&[0, 0, 0, 2, 0xc3, 0x28]).unwrap_err().class(), "encoding");
        assert_eq!(decode(b"\0\0\0\x02{}").unwrap_err().class(), "schema");
        let mut ok = encode(&Message::Error { frame_index: Some(1), message: String::new() });
        ok.push(0);
        assert_eq!(decode_exact(&ok).unwrap_err().class(), "trailing");
    }
}
