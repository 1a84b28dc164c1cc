//! Live inference service: clients post frame batches over HTTP, frames fan
//! out into a lossless model queue and a lossy visualization queue, and a
//! model worker runs the cascade in groups, returning feedback on batch
//! acknowledgements and through `GET /events`.

pub mod client;
pub mod config;
pub mod factory;
mod pipeline;
pub mod server;
pub mod wire;

pub use client::{stream_video, ClientError, ClientRun, ReplayOptions, ServiceClient};
pub use config::ServiceConfig;
pub use factory::{BackendFactory, CorpusFactory, OpenError, OpenedSession};
pub use server::{Service, ServiceError, ServiceStats};
