//! Lockstep client for a model served by another process.

use std::io::{BufReader, BufWriter, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use base64::Engine as _;

use super::protocol::{self, ImageRef, Message, Predictions, PROTOCOL_VERSION};
use super::{BackendError, Detector, FrameInput, FramePayload, LatencyClass, Recognizer, Role};
use crate::cascade::ContactPrediction;
use crate::geometry::Detection;

/// Where the external backend lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// `tcp://host:port`
    Tcp(String),
    /// `cmd:program arg ...`, spoken to over stdin/stdout.
    Command(Vec<String>),
}

impl std::str::FromStr for Endpoint {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(addr) = s.strip_prefix("tcp://") {
            if addr.is_empty() {
                return Err(BackendError::Spec(format!("empty address in {s:?}")));
            }
            Ok(Endpoint::Tcp(addr.to_string()))
        } else if let Some(cmd) = s.strip_prefix("cmd:") {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if argv.is_empty() {
                return Err(BackendError::Spec(format!("empty command in {s:?}")));
            }
            Ok(Endpoint::Command(argv))
        } else {
            Err(BackendError::Spec(format!("endpoint {s:?} must start with tcp:// or cmd:")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExternalOptions {
    pub timeout: Duration,
    /// Expected class names; empty skips the taxonomy check.
    pub taxonomy: Vec<String>,
    pub decision_threshold: f64,
}

impl Default for ExternalOptions {
    fn default() -> Self {
        Self { timeout: Duration::from_secs(5), taxonomy: Vec::new(), decision_threshold: 0.5 }
    }
}

type Inbox = Receiver<Result<Option<Message>, protocol::ProtocolError>>;

struct Connection {
    role: Role,
    writer: Box<dyn Write + Send>,
    inbox: Inbox,
    child: Option<Child>,
    timeout: Duration,
    broken: bool,
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn spawn_reader<R: std::io::Read + Send + 'static>(r: R) -> Inbox {
    let (tx, rx) = mpsc::sync_channel(1);
    std::thread::Builder::new()
        .name("external-backend-reader".into())
        .spawn(move || {
            let mut r = BufReader::new(r);
            loop {
                let msg = protocol::read_message(&mut r);
                let stop = !matches!(msg, Ok(Some(_)));
                if tx.send(msg).is_err() || stop {
                    break;
                }
            }
        })
        .expect("spawn reader thread");
    rx
}

impl Connection {
    fn open(endpoint: &Endpoint, role: Role, opts: &ExternalOptions) -> Result<Self, BackendError> {
        let (writer, inbox, child): (Box<dyn Write + Send>, Inbox, Option<Child>) = match endpoint {
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr)?;
                stream.set_nodelay(true)?;
                let read = stream.try_clone()?;
                (Box::new(BufWriter::new(stream)), spawn_reader(read), None)
            }
            Endpoint::Command(argv) => {
                let mut child = Command::new(&argv[0])
                    .args(&argv[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                (Box::new(BufWriter::new(stdin)), spawn_reader(stdout), Some(child))
            }
        };
        let mut conn = Self { role, writer, inbox, child, timeout: opts.timeout, broken: false };
        conn.handshake(&opts.taxonomy)?;
        Ok(conn)
    }

    fn recv(&mut self, frame: Option<u64>) -> Result<Message, BackendError> {
        match self.inbox.recv_timeout(self.timeout) {
            Ok(Ok(Some(m))) => Ok(m),
            Ok(Ok(None)) | Err(RecvTimeoutError::Disconnected) => {
                self.broken = true;
                Err(BackendError::Malformed("connection closed by the backend".into()))
            }
            Ok(Err(e)) => {
                self.broken = true;
                Err(e.into())
            }
            Err(RecvTimeoutError::Timeout) => {
                self.broken = true;
                Err(BackendError::Timeout { frame: frame.unwrap_or(0), after: self.timeout })
            }
        }
    }

    fn handshake(&mut self, taxonomy: &[String]) -> Result<(), BackendError> {
        let hello = Message::Hello { version: PROTOCOL_VERSION, role: self.role, taxonomy: taxonomy.to_vec() };
        protocol::write_message(&mut self.writer, &hello)?;
        let reply = self.recv(None).map_err(|e| match e {
            BackendError::Timeout { after, .. } => BackendError::Handshake(format!("no hello within {after:?}")),
            other => other,
        })?;
        match reply {
            Message::Hello { version, role, taxonomy: theirs } => {
                if version != PROTOCOL_VERSION {
                    return Err(BackendError::Handshake(format!(
                        "protocol version {version}, expected {PROTOCOL_VERSION}"
                    )));
                }
                if role != self.role {
                    return Err(BackendError::Handshake(format!("backend serves {role}, expected {}", self.role)));
                }
                if !taxonomy.is_empty() && theirs != taxonomy {
                    return Err(BackendError::Handshake(format!("taxonomy mismatch: {theirs:?}")));
                }
                Ok(())
            }
            Message::Error { message, .. } => Err(BackendError::Handshake(message)),
            other => Err(BackendError::Handshake(format!("expected hello, got {other:?}"))),
        }
    }

    fn infer(&mut self, frame: &FrameInput) -> Result<Predictions, BackendError> {
        if self.broken {
            return Err(BackendError::Malformed("connection unusable after an earlier failure".into()));
        }
        let image = match &frame.payload {
            FramePayload::Tick => None,
            FramePayload::Encoded(b) => Some(ImageRef::Base64(base64::engine::general_purpose::STANDARD.encode(b))),
            FramePayload::Path(p) => Some(ImageRef::Path(p.to_string_lossy().into_owned())),
        };
        let f = frame.frame_index;
        let req = Message::Infer { role: self.role, frame_index: f, image };
        if let Err(e) = protocol::write_message(&mut self.writer, &req) {
            self.broken = true;
            return Err(e.into());
        }
        match self.recv(Some(f))? {
            Message::Result { frame_index, predictions } if frame_index == f => Ok(predictions),
            Message::Result { frame_index, .. } => {
                self.broken = true;
                Err(BackendError::Malformed(format!("result for frame {frame_index}, expected {f}")))
            }
            Message::Error { message, .. } => Err(BackendError::Remote { frame: f, message }),
            other => {
                self.broken = true;
                Err(BackendError::Malformed(format!("unexpected {other:?}")))
            }
        }
    }
}

pub struct ExternalRecognizer {
    conn: Connection,
    threshold: f64,
}

impl ExternalRecognizer {
    pub fn connect(endpoint: &Endpoint, opts: &ExternalOptions) -> Result<Self, BackendError> {
        Ok(Self { conn: Connection::open(endpoint, Role::Recognizer, opts)?, threshold: opts.decision_threshold })
    }
}

impl Recognizer for ExternalRecognizer {
    fn feed(&mut self, frame: &FrameInput) -> Result<ContactPrediction, BackendError> {
        match self.conn.infer(frame)? {
            Predictions::Contact { confidence } if (0.0..=1.0).contains(&confidence) => {
                Ok(ContactPrediction::from_confidence(frame.frame_index, confidence, self.threshold))
            }
            other => Err(BackendError::Malformed(format!("recognizer returned {other:?}"))),
        }
    }

    fn latency_class(&self) -> LatencyClass {
        LatencyClass::Bounded(self.conn.timeout)
    }
}

pub struct ExternalDetector {
    conn: Connection,
}

impl ExternalDetector {
    pub fn connect(endpoint: &Endpoint, opts: &ExternalOptions) -> Result<Self, BackendError> {
        Ok(Self { conn: Connection::open(endpoint, Role::Detector, opts)? })
    }
}

impl Detector for ExternalDetector {
    fn detect(&mut self, frame: &FrameInput) -> Result<Vec<Detection>, BackendError> {
        match self.conn.infer(frame)? {
            Predictions::Detections(d) => Ok(d),
            other => Err(BackendError::Malformed(format!("detector returned {other:?}"))),
        }
    }

    fn latency_class(&self) -> LatencyClass {
        LatencyClass::Bounded(self.conn.timeout)
    }
}
