//! File-backed persistence: session documents plus append-only logs, all
//! under one data directory.

pub mod journal;
pub mod sessions;

pub use journal::{read_jsonl, write_jsonl, EventJournal, FeedbackLog, JournalError, MAX_PAYLOAD_BYTES};
pub use sessions::{Lease, SavePhase, SessionStore, StoreError};
