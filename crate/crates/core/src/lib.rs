//! IO-free core of the tutoring engine.
//!
//! Everything in this crate is a value or a pure function over values. Side
//! effects (LLM calls, embeddings from a remote model, the wall clock) enter
//! through the traits in [`gateway`], [`rag::embed`] and [`clock`], so the same
//! turn logic runs against live providers in the service and against scripted
//! providers in tests.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod clock;
pub mod cycle;
pub mod domain;
pub mod feedback;
pub mod gateway;
pub mod ids;
pub mod rag;
pub mod scaffold;

pub use clock::{Clock, FixedClock};
pub use cycle::{
    AgentResponse, CycleConfig, CycleError, CycleTrace, PhaseTimings, PlanAction, ScaffoldDecision,
    TurnEngine,
};
pub use domain::{
    validate_plan, Assessment, Familiarity, Intent, LearnerProfile, LearnerRole, LearningPlan,
    PendingCheck, PlanStep, ScaffoldLevel, SessionState, StepStatus, TurnRecord, Verdict,
};
pub use feedback::{aggregate_metrics, FeedbackRecord, InteractionEvent, EventKind, Metric, MetricSummary};
pub use gateway::{ChatProvider, Completion, FinishReason, GatewayError, PromptBundle};
pub use rag::{ChunkHit, EmbeddingVector, Embedder, GroundingContext, VectorIndex};
pub use scaffold::{ScaffoldConfig, ScaffoldDirective};
