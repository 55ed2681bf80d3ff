//! Service side of the tutor: configuration, corpus ingestion, LLM
//! backends, file persistence, the HTTP API and offline simulation.
//!
//! The turn logic itself lives in `tutor-core`; this crate supplies the
//! clock, the providers and the storage it runs against.

pub mod app;
pub mod config;
pub mod corpus;
pub mod http;
pub mod llm;
pub mod report;
pub mod simulate;
pub mod store;

use std::time::{SystemTime, UNIX_EPOCH};

use tutor_core::Clock;

pub use app::{AppError, ErrorCode, Tutor, TutorParts};
pub use config::ApiConfig;

/// Wall clock in UTC epoch milliseconds.
#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis().try_into().unwrap_or(u64::MAX))
    }
}

/// A fresh random 128-bit id as 32 lowercase hex digits.
pub fn random_id() -> String {
    tutor_core::ids::to_hex(rand::random::<u128>())
}
