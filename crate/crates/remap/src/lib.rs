//! Sessions, persistence, the HTTP service and the CLI on top of `remap-core`.
//!
//! A session is a directory holding an append-only journal (`journal.jsonl`),
//! the dataset manifest it was created with and compacted snapshots. The
//! in-memory [`session::SessionState`] is rebuilt by replaying the journal.

pub mod cli;
pub mod dataset;
pub mod event;
pub mod export;
pub mod http;
pub mod idx;
pub mod journal;
pub mod service;
pub mod session;

pub use dataset::{load_dataset, Manifest};
pub use event::{Event, Job, JobState};
pub use service::{Service, ServiceError, StreamMessage};
pub use session::{Session, SessionError, SessionState};
