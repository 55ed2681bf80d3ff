//! The think, plan, retrieve, act turn cycle.
//!
//! [`TurnEngine::handle_turn`] is a function of `(session, message)` plus the
//! injected provider, embedder, index and clock. It never mutates its input:
//! the successor session is returned alongside the response, and any error
//! leaves the caller holding the original session.

pub mod plan;
pub mod prompt;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use plan::{adapt_plan, PlanAction, MAX_REMEDIAL_PER_STEP};
pub use prompt::compose;

use crate::clock::Clock;
use crate::domain::{Assessment, Intent, LearnerProfile, LearningPlan, PendingCheck, ScaffoldLevel, SessionState, TurnRecord};
use crate::gateway::{complete_structured, ChatProvider, FinishReason, GatewayError, SchemaId, StructuredError, StructuredRequest, StructuredValue};
use crate::ids::derive_id;
use crate::rag::{build_context, Embedder, GroundingContext, IndexError, RagConfig, VectorIndex};
use crate::scaffold::{directive_for, ScaffoldConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CycleConfig {
    pub scaffold: ScaffoldConfig,
    pub rag: RagConfig,
    /// Past turns carried into the teaching prompt.
    pub history_window: usize,
}

impl Default for CycleConfig {
    fn default() -> Self {
        Self {
            scaffold: ScaffoldConfig::default(),
            rag: RagConfig::default(),
            history_window: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CycleError {
    #[error("message is empty")]
    EmptyMessage,
    #[error("topic is empty")]
    EmptyTopic,
    #[error("plan generation failed: {}", .0.join("; "))]
    PlanGenerationFailed(Vec<String>),
    #[error("assessment failed: {0}")]
    AssessmentFailed(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("retrieval failed: {0}")]
    Retrieval(#[from] IndexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaffoldDecision {
    pub before: ScaffoldLevel,
    pub after: ScaffoldLevel,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub think_ms: u64,
    pub plan_ms: u64,
    pub retrieve_ms: u64,
    pub act_ms: u64,
}

/// What the agent decided this turn, phase by phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleTrace {
    pub intent: Intent,
    /// The intent came from the deterministic fallback, not the model.
    pub intent_fallback: bool,
    pub plan_action: PlanAction,
    pub assessment: Option<Assessment>,
    pub assessment_failed: bool,
    pub retrieval_ids: Vec<String>,
    pub scaffold_decision: ScaffoldDecision,
    pub timings: PhaseTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub response_id: String,
    pub text: String,
    pub citations: Vec<String>,
    pub plan_snapshot: Option<LearningPlan>,
    pub scaffold_used: ScaffoldLevel,
    pub check: Option<PendingCheck>,
    pub internal_trace: CycleTrace,
}

/// Everything a turn needs besides the session itself.
#[derive(Clone, Copy)]
pub struct TurnEngine<'a> {
    pub provider: &'a dyn ChatProvider,
    pub embedder: &'a dyn Embedder,
    pub index: &'a VectorIndex,
    pub clock: &'a dyn Clock,
    pub persona: &'a str,
    pub config: &'a CycleConfig,
}

impl TurnEngine<'_> {
    /// Run one full cycle and return the response with the successor session.
    pub fn handle_turn(&self, session: &SessionState, user_message: &str) -> Result<(AgentResponse, SessionState), CycleError> {
        let message = user_message.trim();
        if message.is_empty() {
            return Err(CycleError::EmptyMessage);
        }
        let turn_index = session.next_turn_index();
        let mut next = session.clone();
        let t0 = self.clock.now_ms();

        // Think
        let (intent, intent_fallback) = self.classify_intent(session, message);
        let t1 = self.clock.now_ms();

        // Plan
        let before = session.scaffold;
        let mut plan_action = PlanAction::Held;
        let mut assessment = None;
        let mut assessment_failed = false;
        let mut notes: Vec<String> = Vec::new();
        match intent {
            Intent::NewInquiry => {
                let plan = self.generate_plan(message, &session.learner, &session.session_id, turn_index)?;
                if let Some(old) = next.plan.take() {
                    next.previous_plans.push(old);
                }
                next.plan = Some(plan);
                next.pending_check = None;
                next.scaffold = self.config.scaffold.initial_level(&session.learner);
                plan_action = PlanAction::Created;
            }
            Intent::ResponseToScaffold => {
                let (Some(check), Some(plan)) = (&session.pending_check, &session.plan) else {
                    unreachable!("classify_intent only yields ResponseToScaffold with a pending check");
                };
                match self.assess_response(check, message) {
                    Ok(a) => {
                        next.assessment_history.push(a.clone());
                        let (adapted, action) = adapt_plan(plan, &next.assessment_history);
                        next.plan = Some(adapted);
                        plan_action = action;
                        next.scaffold = self
                            .config
                            .scaffold
                            .next_level(before, &next.assessment_history)
                            .unwrap_or(before);
                        notes.push(assessment_note(&a));
                        if action == PlanAction::Escalated {
                            notes.push(prompt::ESCALATION_NOTE.to_string());
                        }
                        assessment = Some(a);
                    }
                    Err(_) => assessment_failed = true,
                }
            }
            Intent::ClarificationRequest => notes.push(prompt::CLARIFY_NOTE.to_string()),
            Intent::OffTopic => notes.push(prompt::OFF_TOPIC_NOTE.to_string()),
        }
        let t2 = self.clock.now_ms();

        // Retrieve
        let (context, retrieval_ids) = if assessment_failed {
            (GroundingContext::default(), Vec::new())
        } else {
            self.retrieve(&next, message)?
        };
        let t3 = self.clock.now_ms();

        // Act; a failed assessment re-asks the pending check verbatim.
        let directive = directive_for(next.scaffold);
        let (text, check) = if assessment_failed {
            let check = session.pending_check.clone();
            let question = check.as_ref().map(|c| c.question.as_str()).unwrap_or_default();
            let text = format!("I wasn't able to evaluate that answer just now. Let's try the same question again:\n{question}");
            (text, check)
        } else {
            let bundle = compose(self.persona, &directive, &context, &next, message, self.config.history_window, &notes);
            let completion = self.provider.complete(&bundle)?;
            if completion.finish_reason == FinishReason::ProviderError || completion.text.trim().is_empty() {
                return Err(GatewayError::Malformed("empty teaching completion".into()).into());
            }
            let check = self.next_check(directive.require_check, &next, &completion.text);
            (completion.text, check)
        };
        let t4 = self.clock.now_ms();

        let citations = cited_ids(&text, &context);
        next.pending_check = check.clone();
        let response_id = derive_id(&["response", &session.session_id, &format!("{turn_index}")]);
        next.turns.push(TurnRecord {
            turn_index,
            user_message: message.to_string(),
            intent,
            scaffold_used: next.scaffold,
            agent_response_id: response_id.clone(),
            agent_text: text.clone(),
            citations: citations.clone(),
            timestamp: t4,
        });

        let trace = CycleTrace {
            intent,
            intent_fallback,
            plan_action,
            assessment,
            assessment_failed,
            retrieval_ids,
            scaffold_decision: ScaffoldDecision { before, after: next.scaffold },
            timings: PhaseTimings {
                think_ms: t1.saturating_sub(t0),
                plan_ms: t2.saturating_sub(t1),
                retrieve_ms: t3.saturating_sub(t2),
                act_ms: t4.saturating_sub(t3),
            },
        };
        let response = AgentResponse {
            response_id,
            text,
            citations,
            plan_snapshot: next.plan.clone(),
            scaffold_used: next.scaffold,
            check,
            internal_trace: trace,
        };
        Ok((response, next))
    }

    /// Classify with the model; on any failure fall back to
    /// `ResponseToScaffold` when a check is pending and `NewInquiry`
    /// otherwise. The boolean reports whether the fallback was used.
    pub fn classify_intent(&self, session: &SessionState, message: &str) -> (Intent, bool) {
        let pending = session.pending_check.is_some() && session.plan.is_some();
        let req = StructuredRequest {
            bundle: prompt::intent_bundle(session, message),
            schema_id: SchemaId::IntentSchema,
        };
        match complete_structured(self.provider, &req) {
            Ok(StructuredValue::Intent(Intent::ResponseToScaffold)) if !pending => (Intent::NewInquiry, false),
            Ok(StructuredValue::Intent(intent)) => (intent, false),
            _ if pending => (Intent::ResponseToScaffold, true),
            _ => (Intent::NewInquiry, true),
        }
    }

    /// Ask the model for a plan; one extra attempt with the rejection
    /// reasons spelled out if the structured call keeps violating the schema.
    pub fn generate_plan(&self, topic: &str, profile: &LearnerProfile, session_id: &str, turn_index: u64) -> Result<LearningPlan, CycleError> {
        let topic = topic.trim();
        if topic.is_empty() {
            return Err(CycleError::EmptyTopic);
        }
        let plan_id = derive_id(&["plan", session_id, &format!("{turn_index}")]);
        let mut rejected: Option<Vec<String>> = None;
        for _ in 0..2 {
            let req = StructuredRequest {
                bundle: prompt::plan_bundle(topic, profile, rejected.as_deref()),
                schema_id: SchemaId::PlanSchema,
            };
            match complete_structured(self.provider, &req) {
                Ok(StructuredValue::Plan(draft)) => return Ok(draft.into_plan(plan_id, topic, turn_index)),
                Ok(_) => unreachable!("PlanSchema parses to a plan"),
                Err(StructuredError::SchemaViolation { errors, .. }) => rejected = Some(errors),
                Err(StructuredError::Gateway(e)) => return Err(e.into()),
            }
        }
        Err(CycleError::PlanGenerationFailed(rejected.unwrap_or_default()))
    }

    pub fn assess_response(&self, check: &PendingCheck, message: &str) -> Result<Assessment, CycleError> {
        let req = StructuredRequest {
            bundle: prompt::assessment_bundle(check, message),
            schema_id: SchemaId::AssessmentSchema,
        };
        match complete_structured(self.provider, &req) {
            Ok(StructuredValue::Assessment(a)) => Ok(a),
            Ok(_) => unreachable!("AssessmentSchema parses to an assessment"),
            Err(e) => Err(CycleError::AssessmentFailed(e.to_string())),
        }
    }

    /// Query is the active step's objective (or the plan topic, or nothing)
    /// followed by the learner's message. An empty index yields an empty
    /// context rather than an error.
    fn retrieve(&self, session: &SessionState, message: &str) -> Result<(GroundingContext, Vec<String>), CycleError> {
        if self.index.is_empty() {
            return Ok((GroundingContext::default(), Vec::new()));
        }
        let focus = session.plan.as_ref().map(|p| match p.active_step() {
            Some(step) => step.objective.clone(),
            None => p.topic.clone(),
        });
        let query = match focus {
            Some(f) => format!("{f}\n{message}"),
            None => message.to_string(),
        };
        let vector = self.embedder.embed(&query).map_err(GatewayError::from)?;
        let hits = self.index.search(&vector, self.config.rag.k)?;
        let ids = hits.iter().map(|h| h.chunk_id.clone()).collect();
        Ok((build_context(&hits, self.index, self.config.rag.budget), ids))
    }

    fn next_check(&self, require: bool, session: &SessionState, text: &str) -> Option<PendingCheck> {
        if !require {
            return None;
        }
        let step = session.plan.as_ref()?.active_step()?;
        let question = prompt::extract_check_question(text)
            .or_else(|| {
                session
                    .pending_check
                    .as_ref()
                    .filter(|c| c.step_index == step.index)
                    .map(|c| c.question.clone())
            })
            .unwrap_or_else(|| format!("In your own words, how would you explain: {}?", step.objective));
        Some(PendingCheck {
            question,
            step_index: step.index,
            expected_concepts: step.check_concepts().to_vec(),
        })
    }

    /// Rebuild a session from scratch by feeding `messages` through
    /// [`handle_turn`](Self::handle_turn) in order.
    pub fn replay<'m, I>(&self, session_id: &str, learner: LearnerProfile, messages: I) -> Result<SessionState, CycleError>
    where
        I: IntoIterator<Item = &'m str>,
    {
        let mut state = SessionState::new(session_id, learner);
        for m in messages {
            state = self.handle_turn(&state, m)?.1;
        }
        Ok(state)
    }
}

fn assessment_note(a: &Assessment) -> String {
    let mut note = format!("The learner's last answer was assessed as {:?}.", a.verdict);
    if !a.gaps.is_empty() {
        note.push_str(" Remaining gaps to cover together: ");
        note.push_str(&a.gaps.join(", "));
        note.push('.');
    }
    note
}

/// Context chunks the reply cites by marker; if it cites none explicitly,
/// every chunk it was grounded in.
fn cited_ids(text: &str, context: &GroundingContext) -> Vec<String> {
    let explicit: Vec<String> = context
        .chunk_ids
        .iter()
        .filter(|id| text.contains(&crate::rag::source_marker(id)))
        .cloned()
        .collect();
    if explicit.is_empty() {
        context.chunk_ids.clone()
    } else {
        explicit
    }
}
