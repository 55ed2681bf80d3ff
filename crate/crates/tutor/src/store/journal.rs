//! Append-only JSON Lines logs: the interaction event journal and the
//! feedback log.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use tutor_core::{FeedbackRecord, InteractionEvent};

/// Largest accepted serialized event payload.
pub const MAX_PAYLOAD_BYTES: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("event payload is {size} bytes, above the {MAX_PAYLOAD_BYTES} byte cap")]
    Size { size: usize },
    #[error("journal {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
}

struct Tail {
    file: File,
    next_seq: u64,
}

/// Many threads may append at once; the mutex decides the commit order and
/// each committed event carries its position as `seq`.
pub struct EventJournal {
    path: PathBuf,
    tail: Mutex<Tail>,
    dropped: AtomicU64,
}

fn open_append(path: &Path) -> Result<File, JournalError> {
    let io = |source| JournalError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let mut file = OpenOptions::new().create(true).read(true).append(true).open(path).map_err(io)?;
    // A crash can leave a torn last line; terminate it so the next append
    // starts on a fresh line. Readers skip the torn fragment.
    let len = file.metadata().map_err(io)?.len();
    if len > 0 {
        let mut last = [0u8; 1];
        file.seek(SeekFrom::Start(len - 1)).map_err(io)?;
        file.read_exact(&mut last).map_err(io)?;
        if last[0] != b'\n' {
            file.write_all(b"\n").map_err(io)?;
        }
    }
    Ok(file)
}

impl EventJournal {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, JournalError> {
        let path = path.into();
        let file = open_append(&path)?;
        let next_seq = read_lenient::<InteractionEvent>(&path)?
            .0
            .iter()
            .map(|e| e.seq)
            .max()
            .map_or(1, |s| s + 1);
        Ok(Self {
            path,
            tail: Mutex::new(Tail { file, next_seq }),
            dropped: AtomicU64::new(0),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Commit one event and return its sequence number.
    pub fn append(&self, mut event: InteractionEvent) -> Result<u64, JournalError> {
        let size = serde_json::to_vec(&event.payload).map_or(usize::MAX, |b| b.len());
        if size > MAX_PAYLOAD_BYTES {
            return Err(JournalError::Size { size });
        }
        let mut tail = self.tail.lock().unwrap_or_else(|e| e.into_inner());
        event.seq = tail.next_seq;
        let mut line = serde_json::to_vec(&event).map_err(|e| JournalError::Io {
            path: self.path.clone(),
            source: e.into(),
        })?;
        line.push(b'\n');
        tail.file.write_all(&line).map_err(|source| JournalError::Io {
            path: self.path.clone(),
            source,
        })?;
        tail.next_seq += 1;
        Ok(event.seq)
    }

    /// Best-effort append: failures are logged and counted, never returned.
    pub fn record(&self, event: InteractionEvent) {
        if let Err(e) = self.append(event) {
            self.dropped.fetch_add(1, Ordering::Relaxed);
            tracing::warn!(error = %e, "interaction event dropped");
        }
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    /// Every readable event, in commit order.
    pub fn scan(&self) -> Result<Vec<InteractionEvent>, JournalError> {
        let mut events = read_lenient::<InteractionEvent>(&self.path)?.0;
        events.sort_by_key(|e| e.seq);
        Ok(events)
    }

    /// One session's events ordered by timestamp, commit order breaking ties.
    pub fn scan_session(&self, session_id: &str) -> Result<Vec<InteractionEvent>, JournalError> {
        let mut events: Vec<_> = self.scan()?.into_iter().filter(|e| e.session_id == session_id).collect();
        events.sort_by_key(|e| (e.timestamp, e.seq));
        Ok(events)
    }

    /// Write the journal as JSON Lines, one event per line.
    pub fn export(&self, out: &mut dyn Write) -> Result<usize, JournalError> {
        let events = self.scan()?;
        write_jsonl(out, &events).map_err(|source| JournalError::Io {
            path: self.path.clone(),
            source,
        })?;
        Ok(events.len())
    }
}

/// Explicit ratings, one record per line.
pub struct FeedbackLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl FeedbackLog {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, JournalError> {
        let path = path.into();
        let file = open_append(&path)?;
        Ok(Self {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn append(&self, record: &FeedbackRecord) -> Result<(), JournalError> {
        let mut line = serde_json::to_vec(record).map_err(|e| JournalError::Io {
            path: self.path.clone(),
            source: e.into(),
        })?;
        line.push(b'\n');
        let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
        f.write_all(&line).map_err(|source| JournalError::Io {
            path: self.path.clone(),
            source,
        })
    }

    pub fn records(&self) -> Result<Vec<FeedbackRecord>, JournalError> {
        Ok(read_lenient(&self.path)?.0)
    }
}

pub fn write_jsonl<T: Serialize>(out: &mut dyn Write, items: &[T]) -> io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut *out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Parse every line, failing on the first one that is not a `T`. Blank
/// lines are ignored.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JournalError> {
    let text = fs::read_to_string(path).map_err(|source| JournalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| JournalError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Parse what can be parsed; returns the items and the number of lines
/// skipped. A missing file reads as empty.
fn read_lenient<T: DeserializeOwned>(path: &Path) -> Result<(Vec<T>, usize), JournalError> {
    let text = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
        Err(source) => {
            return Err(JournalError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    let mut items = Vec::new();
    let mut skipped = 0;
    for line in text.split(|b| *b == b'\n') {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        match serde_json::from_slice(line) {
            Ok(v) => items.push(v),
            Err(_) => skipped += 1,
        }
    }
    Ok((items, skipped))
}
