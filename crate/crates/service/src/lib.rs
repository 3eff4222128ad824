//! Batch-selection service: exposes a Thompson-sampling scheduler to an
//! external training loop over line-delimited JSON, on stdio or TCP.
//!
//! Each session owns one scheduler. Batches must be reported before the next
//! one is issued, and session state is checkpointed so a restarted process
//! continues the exact selection sequence.

mod config;
mod error;
pub mod protocol;
mod service;
mod session;
pub mod transport;

pub use config::{ServeConfig, SessionConfig, Transport, TRANSPORT_ENV};
pub use error::{Result, ServiceError};
pub use service::{Reply, Service};
pub use session::{SessionCheckpoint, SESSION_CHECKPOINT_VERSION};
