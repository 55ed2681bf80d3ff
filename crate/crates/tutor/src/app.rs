//! The running tutor: engine dependencies plus storage, shared by the HTTP
//! handlers. All methods block; the service calls them from worker threads.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::json;
use tutor_core::feedback::{parse_ratings, FeedbackError};
use tutor_core::{
    AgentResponse, ChatProvider, Clock, CycleConfig, CycleError, Embedder, EventKind, FeedbackRecord, InteractionEvent,
    LearnerProfile, PlanAction, SessionState, TurnEngine, VectorIndex,
};

use crate::config::ApiConfig;
use crate::corpus::{self, CorpusError};
use crate::llm;
use crate::store::{EventJournal, FeedbackLog, Lease, SessionStore, StoreError};
use crate::{random_id, SystemClock};

/// Machine-readable error codes; the closed set every error body uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    Conflict,
    Unprocessable,
    GatewayError,
    Internal,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::BadRequest => "bad_request",
            ErrorCode::NotFound => "not_found",
            ErrorCode::Conflict => "conflict",
            ErrorCode::Unprocessable => "unprocessable",
            ErrorCode::GatewayError => "gateway_error",
            ErrorCode::Internal => "internal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}: {message}", code.as_str())]
pub struct AppError {
    pub code: ErrorCode,
    pub message: String,
}

impl AppError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<StoreError> for AppError {
    fn from(e: StoreError) -> Self {
        let code = match e {
            StoreError::NotFound(_) => ErrorCode::NotFound,
            StoreError::Conflict { .. } | StoreError::AlreadyExists(_) => ErrorCode::Conflict,
            _ => ErrorCode::Internal,
        };
        AppError::new(code, e.to_string())
    }
}

impl From<CycleError> for AppError {
    fn from(e: CycleError) -> Self {
        let code = match e {
            CycleError::EmptyMessage | CycleError::EmptyTopic => ErrorCode::Unprocessable,
            CycleError::Retrieval(_) => ErrorCode::Internal,
            CycleError::PlanGenerationFailed(_) | CycleError::AssessmentFailed(_) | CycleError::Gateway(_) => {
                ErrorCode::GatewayError
            }
        };
        AppError::new(code, e.to_string())
    }
}

impl From<FeedbackError> for AppError {
    fn from(e: FeedbackError) -> Self {
        AppError::new(ErrorCode::BadRequest, e.to_string())
    }
}

impl From<CorpusError> for AppError {
    fn from(e: CorpusError) -> Self {
        let code = match &e {
            CorpusError::MissingDir(_)
            | CorpusError::NotUtf8(_)
            | CorpusError::EmptyDoc(_)
            | CorpusError::UnclosedFrontMatter(_)
            | CorpusError::NoDocuments(_) => ErrorCode::BadRequest,
            CorpusError::Ingest(tutor_core::rag::IngestError::Embed(_)) => ErrorCode::GatewayError,
            CorpusError::Ingest(_) => ErrorCode::BadRequest,
            CorpusError::Io { .. } | CorpusError::IndexFile { .. } => ErrorCode::Internal,
        };
        AppError::new(code, e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub docs: usize,
    pub chunks: usize,
}

/// Releases the lease when dropped, including on panic.
struct LeaseGuard<'a> {
    store: &'a SessionStore,
    lease: Lease,
}

impl Drop for LeaseGuard<'_> {
    fn drop(&mut self) {
        self.store.release(&self.lease);
    }
}

pub struct Tutor {
    provider: Arc<dyn ChatProvider>,
    embedder: Arc<dyn Embedder>,
    embedder_id: String,
    index: RwLock<Arc<VectorIndex>>,
    /// One ingest at a time; searches never wait on it.
    ingest_lock: Mutex<()>,
    store: SessionStore,
    journal: EventJournal,
    feedback: FeedbackLog,
    clock: Arc<dyn Clock>,
    persona: String,
    cycle: CycleConfig,
    data_dir: PathBuf,
}

/// Everything needed to assemble a [`Tutor`] by hand (tests, simulations).
pub struct TutorParts {
    pub provider: Arc<dyn ChatProvider>,
    pub embedder: Arc<dyn Embedder>,
    pub embedder_id: String,
    pub clock: Arc<dyn Clock>,
    pub persona: String,
    pub cycle: CycleConfig,
    pub data_dir: PathBuf,
    pub lease_ttl: Duration,
}

pub fn index_path(data_dir: &Path) -> PathBuf {
    data_dir.join("index.json")
}

impl Tutor {
    /// Open storage under `parts.data_dir` and load `index.json` if present.
    pub fn assemble(parts: TutorParts) -> anyhow::Result<Self> {
        let dir = &parts.data_dir;
        std::fs::create_dir_all(dir)?;
        let index_file = index_path(dir);
        let index = if index_file.exists() {
            let file = corpus::load_index(&index_file)?;
            if file.embedder != parts.embedder_id {
                anyhow::bail!(
                    "{} was built with embedder {}, but {} is configured; re-run ingest",
                    index_file.display(),
                    file.embedder,
                    parts.embedder_id
                );
            }
            file.index
        } else {
            VectorIndex::new(parts.embedder.dim())
        };
        Ok(Self {
            store: SessionStore::open(dir.join("sessions"), parts.lease_ttl)?,
            journal: EventJournal::open(dir.join("events.jsonl"))?,
            feedback: FeedbackLog::open(dir.join("feedback.jsonl"))?,
            index: RwLock::new(Arc::new(index)),
            ingest_lock: Mutex::new(()),
            provider: parts.provider,
            embedder: parts.embedder,
            embedder_id: parts.embedder_id,
            clock: parts.clock,
            persona: parts.persona,
            cycle: parts.cycle,
            data_dir: parts.data_dir,
        })
    }

    /// Build from configuration. Must run outside any async runtime.
    pub fn from_config(cfg: &ApiConfig) -> anyhow::Result<Self> {
        let provider = llm::provider_from_config(cfg)?;
        let (embedder, embedder_id) = llm::embedder_from_config(cfg)?;
        Self::assemble(TutorParts {
            provider,
            embedder,
            embedder_id,
            clock: Arc::new(SystemClock),
            persona: cfg.persona()?,
            cycle: cfg.cycle(),
            data_dir: cfg.data_dir.clone(),
            lease_ttl: Duration::from_secs(cfg.lease_secs),
        })
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    pub fn journal(&self) -> &EventJournal {
        &self.journal
    }

    pub fn feedback_log(&self) -> &FeedbackLog {
        &self.feedback
    }

    /// The index readers currently see.
    pub fn index(&self) -> Arc<VectorIndex> {
        self.index.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn event(&self, session_id: &str, kind: EventKind, payload: serde_json::Value) {
        self.journal.record(InteractionEvent {
            event_id: random_id(),
            session_id: session_id.to_string(),
            kind,
            payload,
            timestamp: self.clock.now_ms(),
            seq: 0,
        });
    }

    pub fn create_session(&self, learner: LearnerProfile) -> Result<SessionState, AppError> {
        if learner.learner_id.trim().is_empty() {
            return Err(AppError::new(ErrorCode::BadRequest, "learner_id must be non-empty"));
        }
        let state = SessionState::new(random_id(), learner);
        self.store.create(&state)?;
        Ok(state)
    }

    pub fn session(&self, session_id: &str) -> Result<(SessionState, u64), AppError> {
        Ok(self.store.load(session_id)?)
    }

    /// One tutoring turn under the session's lease. On any error the stored
    /// session is left as it was.
    pub fn post_message(&self, session_id: &str, text: &str) -> Result<AgentResponse, AppError> {
        let started = Instant::now();
        self.store.load(session_id)?;
        if text.trim().is_empty() {
            return Err(AppError::new(ErrorCode::Unprocessable, "text must be non-empty"));
        }
        let guard = LeaseGuard {
            lease: self.store.acquire(session_id)?,
            store: &self.store,
        };
        let (session, version) = self.store.load(session_id)?;
        let index = self.index();
        let engine = TurnEngine {
            provider: self.provider.as_ref(),
            embedder: self.embedder.as_ref(),
            index: &index,
            clock: self.clock.as_ref(),
            persona: &self.persona,
            config: &self.cycle,
        };
        let (response, next) = match engine.handle_turn(&session, text) {
            Ok(r) => r,
            Err(e) => {
                let err = AppError::from(e);
                if err.code == ErrorCode::GatewayError {
                    self.event(session_id, EventKind::GatewayError, json!({ "message": err.message }));
                }
                return Err(err);
            }
        };
        self.store.save(&guard.lease, version, &next)?;
        drop(guard);
        self.turn_events(&next, &response, started.elapsed());
        Ok(response)
    }

    fn turn_events(&self, session: &SessionState, r: &AgentResponse, elapsed: Duration) {
        let id = &session.session_id;
        let trace = &r.internal_trace;
        let turn_index = session.turns.last().map_or(0, |t| t.turn_index);
        self.event(
            id,
            EventKind::RetrievalPerformed,
            json!({ "turn_index": turn_index, "chunk_ids": trace.retrieval_ids }),
        );
        match (trace.plan_action, &r.plan_snapshot) {
            (PlanAction::Created, Some(plan)) => self.event(
                id,
                EventKind::PlanCreated,
                json!({ "turn_index": turn_index, "plan_id": plan.plan_id, "steps": plan.steps.len() }),
            ),
            (PlanAction::Revised | PlanAction::Escalated, Some(plan)) => self.event(
                id,
                EventKind::PlanRevised,
                json!({ "turn_index": turn_index, "action": trace.plan_action, "revision": plan.revision }),
            ),
            _ => {}
        }
        let d = trace.scaffold_decision;
        if d.before != d.after {
            self.event(
                id,
                EventKind::ScaffoldChanged,
                json!({ "turn_index": turn_index, "before": d.before, "after": d.after }),
            );
        }
        self.event(
            id,
            EventKind::TurnCompleted,
            json!({
                "turn_index": turn_index,
                "response_id": r.response_id,
                "intent": trace.intent,
                "scaffold": r.scaffold_used,
                "citations": r.citations,
                "latency_ms": u64::try_from(elapsed.as_millis()).unwrap_or(u64::MAX),
                "timings": trace.timings,
            }),
        );
    }

    pub fn submit_feedback(
        &self,
        session_id: &str,
        ratings: &BTreeMap<String, i64>,
        free_text: Option<String>,
        turn_index: Option<u64>,
    ) -> Result<FeedbackRecord, AppError> {
        let (session, _) = self.store.load(session_id)?;
        let ratings = parse_ratings(ratings.iter().map(|(k, v)| (k.as_str(), *v)))?;
        if let Some(t) = turn_index {
            if t >= session.next_turn_index() {
                return Err(AppError::new(
                    ErrorCode::BadRequest,
                    format!("turn_index {t} does not exist in this session"),
                ));
            }
        }
        let record = FeedbackRecord {
            session_id: session_id.to_string(),
            turn_index,
            ratings,
            free_text: free_text.filter(|t| !t.trim().is_empty()),
            timestamp: self.clock.now_ms(),
        };
        self.feedback
            .append(&record)
            .map_err(|e| AppError::new(ErrorCode::Internal, e.to_string()))?;
        self.event(
            session_id,
            EventKind::FeedbackSubmitted,
            json!({ "turn_index": turn_index, "metrics": record.ratings.len() }),
        );
        Ok(record)
    }

    /// Rebuild the index from `dir`, persist it, then swap it in. Turns in
    /// flight keep the index they started with.
    pub fn ingest(&self, dir: &Path) -> Result<IngestSummary, AppError> {
        let _one_at_a_time = self.ingest_lock.lock().unwrap_or_else(|e| e.into_inner());
        let file = corpus::ingest(dir, self.embedder.as_ref(), &self.embedder_id, &self.cycle.rag)?;
        corpus::save_index(&index_path(&self.data_dir), &file)?;
        let summary = IngestSummary {
            docs: file.index.doc_count(),
            chunks: file.index.len(),
        };
        *self.index.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(file.index);
        Ok(summary)
    }
}
