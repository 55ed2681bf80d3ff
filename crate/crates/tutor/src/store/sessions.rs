//! Versioned session documents with per-session write leases.
//!
//! Each session lives in `<dir>/<session_id>.json` as
//! `{"format_version": 1, "version": n, "state": {...}}`. A save writes a
//! temporary file, syncs it, renames it over the old document and syncs the
//! directory, so a crash at any point leaves either the old or the new
//! version on disk, never a mixture.
//!
//! Writers must hold the session's lease and name the version they read;
//! a save against a newer version fails with `Conflict` even under a valid
//! lease.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tutor_core::ids::is_valid_id;
use tutor_core::SessionState;

pub const SESSION_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("session {0} not found")]
    NotFound(String),
    #[error("conflict on session {session_id}: {reason}")]
    Conflict { session_id: String, reason: String },
    #[error("session {0} already exists")]
    AlreadyExists(String),
    #[error("session document {path} is corrupt: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("storage error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("simulated crash after {0:?}")]
    InjectedCrash(SavePhase),
}

/// Points inside a save where a crash can be simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SavePhase {
    /// Half of the new document has reached the temporary file.
    PartialWrite,
    /// The temporary file is complete but not yet synced.
    TempWritten,
    /// The temporary file is synced; the rename has not happened.
    TempSynced,
    /// The rename happened; the directory is not yet synced.
    Renamed,
}

impl SavePhase {
    pub const ALL: [SavePhase; 4] = [
        SavePhase::PartialWrite,
        SavePhase::TempWritten,
        SavePhase::TempSynced,
        SavePhase::Renamed,
    ];
}

#[derive(Serialize, Deserialize)]
struct Document {
    format_version: u32,
    version: u64,
    state: SessionState,
}

/// Proof of holding a session's write lease.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lease {
    pub session_id: String,
    pub token: u64,
}

struct LeaseSlot {
    token: u64,
    expires: Instant,
}

pub struct SessionStore {
    dir: PathBuf,
    ttl: Duration,
    leases: Mutex<HashMap<String, LeaseSlot>>,
    next_token: Mutex<u64>,
    /// Serializes the read-check-write of saves per session.
    write_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    crash_at: Mutex<Option<SavePhase>>,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>, lease_ttl: Duration) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| StoreError::Io { path: dir.clone(), source })?;
        Ok(Self {
            dir,
            ttl: lease_ttl,
            leases: Mutex::new(HashMap::new()),
            next_token: Mutex::new(1),
            write_locks: Mutex::new(HashMap::new()),
            crash_at: Mutex::new(None),
        })
    }

    /// Make the next save stop at `phase` as if the process died there.
    pub fn inject_crash(&self, phase: Option<SavePhase>) {
        *lock(&self.crash_at) = phase;
    }

    fn path(&self, session_id: &str) -> PathBuf {
        self.dir.join(format!("{session_id}.json"))
    }

    fn check_id(session_id: &str) -> Result<(), StoreError> {
        // Ids become file names, so nothing but the canonical hex form.
        if is_valid_id(session_id) {
            Ok(())
        } else {
            Err(StoreError::NotFound(session_id.to_string()))
        }
    }

    pub fn exists(&self, session_id: &str) -> bool {
        Self::check_id(session_id).is_ok() && self.path(session_id).is_file()
    }

    /// Persist a brand-new session as version 1.
    pub fn create(&self, state: &SessionState) -> Result<u64, StoreError> {
        Self::check_id(&state.session_id)?;
        let guard = self.write_lock(&state.session_id);
        let _held = lock(&guard);
        if self.path(&state.session_id).exists() {
            return Err(StoreError::AlreadyExists(state.session_id.clone()));
        }
        self.write(state, 1)?;
        Ok(1)
    }

    pub fn load(&self, session_id: &str) -> Result<(SessionState, u64), StoreError> {
        Self::check_id(session_id)?;
        let path = self.path(session_id);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(StoreError::NotFound(session_id.to_string())),
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        let doc: Document = serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
            path: path.clone(),
            message: e.to_string(),
        })?;
        if doc.format_version != SESSION_FORMAT_VERSION {
            return Err(StoreError::Corrupt {
                path,
                message: format!("unsupported format_version {}", doc.format_version),
            });
        }
        Ok((doc.state, doc.version))
    }

    /// Take the write lease, or fail with `Conflict` while someone else
    /// holds an unexpired one.
    pub fn acquire(&self, session_id: &str) -> Result<Lease, StoreError> {
        if !self.exists(session_id) {
            return Err(StoreError::NotFound(session_id.to_string()));
        }
        let now = Instant::now();
        let mut leases = lock(&self.leases);
        if let Some(slot) = leases.get(session_id) {
            if slot.expires > now {
                return Err(StoreError::Conflict {
                    session_id: session_id.to_string(),
                    reason: "a turn is already in flight".into(),
                });
            }
        }
        let token = {
            let mut next = lock(&self.next_token);
            let t = *next;
            *next += 1;
            t
        };
        leases.insert(
            session_id.to_string(),
            LeaseSlot {
                token,
                expires: now + self.ttl,
            },
        );
        Ok(Lease {
            session_id: session_id.to_string(),
            token,
        })
    }

    /// Give the lease back. Releasing a lease that already expired or was
    /// taken over is a no-op.
    pub fn release(&self, lease: &Lease) {
        let mut leases = lock(&self.leases);
        if leases.get(&lease.session_id).is_some_and(|s| s.token == lease.token) {
            leases.remove(&lease.session_id);
        }
    }

    fn lease_is_current(&self, lease: &Lease) -> bool {
        lock(&self.leases)
            .get(&lease.session_id)
            .is_some_and(|s| s.token == lease.token && s.expires > Instant::now())
    }

    fn write_lock(&self, session_id: &str) -> Arc<Mutex<()>> {
        lock(&self.write_locks).entry(session_id.to_string()).or_default().clone()
    }

    /// Save `state` as the successor of `expected_version`. Returns the new
    /// version.
    pub fn save(&self, lease: &Lease, expected_version: u64, state: &SessionState) -> Result<u64, StoreError> {
        let conflict = |reason: String| StoreError::Conflict {
            session_id: lease.session_id.clone(),
            reason,
        };
        if state.session_id != lease.session_id {
            return Err(conflict("lease belongs to another session".into()));
        }
        let guard = self.write_lock(&lease.session_id);
        let _held = lock(&guard);
        if !self.lease_is_current(lease) {
            return Err(conflict("lease expired or superseded".into()));
        }
        let (_, current) = self.load(&lease.session_id)?;
        if current != expected_version {
            return Err(conflict(format!("expected version {expected_version}, found {current}")));
        }
        let next = current + 1;
        self.write(state, next)?;
        Ok(next)
    }

    fn write(&self, state: &SessionState, version: u64) -> Result<(), StoreError> {
        let path = self.path(&state.session_id);
        let tmp = self.dir.join(format!(".{}.{}.tmp", state.session_id, version));
        let io = |p: &Path| {
            let p = p.to_path_buf();
            move |source| StoreError::Io { path: p, source }
        };
        let bytes = serde_json::to_vec(&Document {
            format_version: SESSION_FORMAT_VERSION,
            version,
            state: state.clone(),
        })
        .map_err(|e| StoreError::Corrupt {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let crash = *lock(&self.crash_at);
        let stop = |phase| {
            if crash == Some(phase) {
                *lock(&self.crash_at) = None;
                Err(StoreError::InjectedCrash(phase))
            } else {
                Ok(())
            }
        };

        let mut f = File::create(&tmp).map_err(io(&tmp))?;
        let half = bytes.len() / 2;
        f.write_all(&bytes[..half]).map_err(io(&tmp))?;
        stop(SavePhase::PartialWrite)?;
        f.write_all(&bytes[half..]).map_err(io(&tmp))?;
        stop(SavePhase::TempWritten)?;
        f.sync_all().map_err(io(&tmp))?;
        drop(f);
        stop(SavePhase::TempSynced)?;
        fs::rename(&tmp, &path).map_err(io(&path))?;
        stop(SavePhase::Renamed)?;
        if let Ok(d) = File::open(&self.dir) {
            // Directory fsync is unsupported on some platforms; the rename
            // itself is already atomic.
            let _ = d.sync_all();
        }
        Ok(())
    }
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}
