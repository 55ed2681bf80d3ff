//! Completion provider interface and structured-output contracts.
//!
//! Providers live in the service crate (an OpenAI-compatible HTTP client and
//! a scripted provider). This module owns the request/response values and
//! the JSON contracts for plans, assessments and intents, including the
//! single repair round-trip on a malformed reply.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{validate_plan, Assessment, Intent, LearningPlan, PlanStep, StepStatus, Verdict};
use crate::rag::EmbedError;

pub const STRUCTURED_TEMPERATURE: f64 = 0.2;
pub const TEACHING_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub temperature: f64,
    pub max_tokens: u32,
    /// Reserved for token streaming; providers reject `true` for now.
    #[serde(default)]
    pub stream: bool,
}

impl GenParams {
    pub fn structured() -> Self {
        Self { temperature: STRUCTURED_TEMPERATURE, max_tokens: 1024, stream: false }
    }

    pub fn teaching() -> Self {
        Self { temperature: TEACHING_TEMPERATURE, max_tokens: 1024, stream: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub messages: Vec<ChatMessage>,
    pub params: GenParams,
}

impl PromptBundle {
    /// System text and every message, newline-joined. Scripted providers
    /// match their rules against this.
    pub fn render(&self) -> String {
        let mut out = self.system_text.clone();
        for m in &self.messages {
            out.push('\n');
            out.push_str(&m.content);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    ProviderError,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_units: u64,
    pub output_units: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("provider did not answer within the deadline ({elapsed_ms} ms elapsed)")]
    Timeout { elapsed_ms: u64 },
    #[error("provider returned status {status}: {body_excerpt}")]
    Provider { status: u16, body_excerpt: String },
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("no script rule matched the request")]
    NoScriptMatch,
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("streaming is not supported")]
    StreamingUnsupported,
    #[error(transparent)]
    Embedding(#[from] EmbedError),
}

impl GatewayError {
    pub fn is_retriable(&self) -> bool {
        match self {
            GatewayError::Provider { status, .. } => *status == 429 || *status >= 500,
            GatewayError::Embedding(EmbedError::Remote { retriable, .. }) => *retriable,
            _ => false,
        }
    }
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, bundle: &PromptBundle) -> Result<Completion, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemaId {
    PlanSchema,
    AssessmentSchema,
    IntentSchema,
}

impl SchemaId {
    pub fn tag(self) -> &'static str {
        match self {
            SchemaId::PlanSchema => "schema:PlanSchema",
            SchemaId::AssessmentSchema => "schema:AssessmentSchema",
            SchemaId::IntentSchema => "schema:IntentSchema",
        }
    }

    fn shape(self) -> &'static str {
        match self {
            SchemaId::PlanSchema => {
                "Reply with one JSON object: {\"topic\": string, \"steps\": [{\"index\": integer, \"title\": string, \
                 \"objective\": string, \"concepts\": [string]}]} with 3 to 9 steps ordered from prerequisites to advanced material."
            }
            SchemaId::AssessmentSchema => {
                "Reply with one JSON object: {\"verdict\": \"Mastered\" | \"Partial\" | \"Struggling\", \
                 \"gaps\": [string], \"rationale\": string}. List in gaps every expected concept the answer does not evidence."
            }
            SchemaId::IntentSchema => {
                "Reply with one JSON object: {\"intent\": \"NewInquiry\" | \"ResponseToScaffold\" | \
                 \"ClarificationRequest\" | \"OffTopic\"}."
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredRequest {
    pub bundle: PromptBundle,
    pub schema_id: SchemaId,
}

/// A plan as proposed by the model, before ids and turn bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanDraft {
    pub topic: Option<String>,
    pub steps: Vec<PlanStep>,
}

impl PlanDraft {
    pub fn into_plan(self, plan_id: String, fallback_topic: &str, created_turn: u64) -> LearningPlan {
        LearningPlan {
            plan_id,
            topic: self.topic.unwrap_or_else(|| fallback_topic.to_string()),
            steps: self.steps,
            created_turn,
            revision: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StructuredValue {
    Plan(PlanDraft),
    Assessment(Assessment),
    Intent(Intent),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructuredError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{schema:?} violated: {}", errors.join("; "))]
    SchemaViolation { schema: SchemaId, errors: Vec<String> },
}

/// Run a structured request, allowing one repair round.
///
/// The schema tag and shape are appended to the system text. If the reply
/// does not parse or validate, the model is shown its reply and the list of
/// problems and asked once more; a second failure is returned as
/// `SchemaViolation` carrying the second round's problems.
pub fn complete_structured(provider: &dyn ChatProvider, req: &StructuredRequest) -> Result<StructuredValue, StructuredError> {
    let mut bundle = req.bundle.clone();
    bundle.system_text.push_str("\n\n");
    bundle.system_text.push_str(req.schema_id.tag());
    bundle.system_text.push('\n');
    bundle.system_text.push_str(req.schema_id.shape());

    let first = provider.complete(&bundle)?;
    let errors = match parse_structured(req.schema_id, &first.text) {
        Ok(v) => return Ok(v),
        Err(e) => e,
    };

    let mut repair = bundle;
    repair.messages.push(ChatMessage::assistant(first.text));
    let mut note = format!(
        "Your previous reply did not satisfy {}. Problems:\n",
        req.schema_id.tag()
    );
    for e in &errors {
        note.push_str("- ");
        note.push_str(e);
        note.push('\n');
    }
    note.push_str("Reply again with only the corrected JSON object.");
    repair.messages.push(ChatMessage::user(note));

    let second = provider.complete(&repair)?;
    parse_structured(req.schema_id, &second.text).map_err(|errors| StructuredError::SchemaViolation {
        schema: req.schema_id,
        errors,
    })
}

/// The outermost `{...}` in `text`, tolerating code fences and chatter.
fn json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

fn squash(label: &str) -> String {
    label
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .flat_map(|c| c.to_lowercase())
        .collect()
}

#[derive(Deserialize)]
struct PlanDoc {
    #[serde(default)]
    topic: Option<String>,
    steps: Vec<PlanStepDoc>,
}

#[derive(Deserialize)]
struct PlanStepDoc {
    #[serde(default)]
    title: String,
    #[serde(default)]
    objective: String,
    #[serde(default)]
    concepts: Vec<String>,
}

#[derive(Deserialize)]
struct AssessmentDoc {
    verdict: String,
    #[serde(default)]
    gaps: Vec<String>,
    #[serde(default)]
    rationale: String,
}

#[derive(Deserialize)]
struct IntentDoc {
    intent: String,
}

pub fn parse_structured(schema: SchemaId, text: &str) -> Result<StructuredValue, Vec<String>> {
    let Some(obj) = json_object(text) else {
        return Err(alloc::vec![String::from("json: no JSON object found in reply")]);
    };
    let json_err = |e: serde_json::Error| alloc::vec![format!("json: {e}")];
    match schema {
        SchemaId::PlanSchema => {
            let doc: PlanDoc = serde_json::from_str(obj).map_err(json_err)?;
            parse_plan(doc).map(StructuredValue::Plan)
        }
        SchemaId::AssessmentSchema => {
            let doc: AssessmentDoc = serde_json::from_str(obj).map_err(json_err)?;
            let verdict = match squash(&doc.verdict).as_str() {
                "mastered" => Verdict::Mastered,
                "partial" => Verdict::Partial,
                "struggling" => Verdict::Struggling,
                _ => return Err(alloc::vec![format!("verdict: unknown value {:?}", doc.verdict)]),
            };
            Ok(StructuredValue::Assessment(Assessment {
                verdict,
                gaps: doc.gaps.into_iter().filter(|g| !g.trim().is_empty()).collect(),
                rationale: doc.rationale,
            }))
        }
        SchemaId::IntentSchema => {
            let doc: IntentDoc = serde_json::from_str(obj).map_err(json_err)?;
            let intent = match squash(&doc.intent).as_str() {
                "newinquiry" => Intent::NewInquiry,
                "responsetoscaffold" => Intent::ResponseToScaffold,
                "clarificationrequest" => Intent::ClarificationRequest,
                "offtopic" => Intent::OffTopic,
                _ => return Err(alloc::vec![format!("intent: unknown value {:?}", doc.intent)]),
            };
            Ok(StructuredValue::Intent(intent))
        }
    }
}

/// Steps keep the order the model listed them in and are renumbered 1..n,
/// with the first step Active.
fn parse_plan(doc: PlanDoc) -> Result<PlanDraft, Vec<String>> {
    let steps: Vec<PlanStep> = doc
        .steps
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let status = if i == 0 { StepStatus::Active } else { StepStatus::Pending };
            let mut step = PlanStep::new(i as u32 + 1, s.title.trim(), s.objective.trim(), status);
            step.concepts = s.concepts.into_iter().filter(|c| !c.trim().is_empty()).collect();
            step
        })
        .collect();
    let draft = PlanDraft {
        topic: doc.topic.filter(|t| !t.trim().is_empty()),
        steps,
    };
    let probe = draft.clone().into_plan(String::new(), "", 0);
    let violations = validate_plan(&probe);
    if violations.is_empty() {
        Ok(draft)
    } else {
        Err(violations)
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use alloc::vec::Vec;
    use std::sync::Mutex;

    /// Replies in order and records every bundle it was given.
    pub struct Queue {
        replies: Mutex<Vec<Result<String, GatewayError>>>,
        pub seen: Mutex<Vec<PromptBundle>>,
    }

    impl Queue {
        pub fn new(replies: Vec<Result<String, GatewayError>>) -> Self {
            let mut replies = replies;
            replies.reverse();
            Self { replies: Mutex::new(replies), seen: Mutex::new(Vec::new()) }
        }
    }

    impl ChatProvider for Queue {
        fn complete(&self, bundle: &PromptBundle) -> Result<Completion, GatewayError> {
            self.seen.lock().unwrap().push(bundle.clone());
            let next = self.replies.lock().unwrap().pop().unwrap_or(Err(GatewayError::NoScriptMatch));
            next.map(|text| Completion {
                text,
                finish_reason: FinishReason::Stop,
                usage: Usage::default(),
                latency_ms: 0,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testing::Queue;
    use super::*;
    use alloc::vec;

    const MALWARE_PLAN: &str = r#"```json
{"topic": "malware defense", "steps": [
 {"index": 1, "title": "Definitions & Vectors", "objective": "Name malware categories and infection vectors", "concepts": ["Virus", "Worm", "Ransomware", "Trojan", "Rootkit"]},
 {"index": 2, "title": "Baseline Hygiene", "objective": "Patch, least privilege, safe browsing"},
 {"index": 3, "title": "Anti-malware Tools", "objective": "Endpoint protection"},
 {"index": 4, "title": "Layered Defenses", "objective": "Defense in depth"},
 {"index": 5, "title": "Incident Response", "objective": "Contain and recover"}]}
```"#;

    fn req(schema: SchemaId) -> StructuredRequest {
        StructuredRequest {
            bundle: PromptBundle {
                system_text: "plan it".into(),
                messages: vec![ChatMessage::user("What should I do to defend against malware?")],
                params: GenParams::structured(),
            },
            schema_id: schema,
        }
    }

    #[test]
    fn fenced_plan_parses_and_validates() {
        let q = Queue::new(vec![Ok(MALWARE_PLAN.into())]);
        let StructuredValue::Plan(draft) = complete_structured(&q, &req(SchemaId::PlanSchema)).unwrap() else {
            panic!("expected a plan");
        };
        let plan = draft.into_plan("p".into(), "x", 0);
        assert!(validate_plan(&plan).is_empty());
        let titles: Vec<&str> = plan.steps.iter().map(|s| s.title.as_str()).collect();
        assert_eq!(
            titles,
            ["Definitions & Vectors", "Baseline Hygiene", "Anti-malware Tools", "Layered Defenses", "Incident Response"]
        );
        assert_eq!(plan.steps[0].status, StepStatus::Active);
        assert_eq!(plan.steps[0].concepts.len(), 5);
        let seen = q.seen.lock().unwrap();
        assert!(seen[0].system_text.contains("schema:PlanSchema"));
    }

    #[test]
    fn malformed_twice_is_schema_violation() {
        let q = Queue::new(vec![Ok("sure! here you go".into()), Ok("{not json".into())]);
        let err = complete_structured(&q, &req(SchemaId::PlanSchema)).unwrap_err();
        assert!(matches!(err, StructuredError::SchemaViolation { schema: SchemaId::PlanSchema, .. }));
        let seen = q.seen.lock().unwrap();
        assert_eq!(seen.len(), 2);
        let repair = &seen[1].messages;
        assert_eq!(repair[1].content, "sure! here you go");
        assert!(repair[2].content.contains("no JSON object"));
    }

    #[test]
    fn two_step_plan_cites_minimum() {
        let two = r#"{"steps": [{"title": "a", "objective": "b"}, {"title": "c", "objective": "d"}]}"#;
        let q = Queue::new(vec![Ok(two.into()), Ok(two.into())]);
        match complete_structured(&q, &req(SchemaId::PlanSchema)) {
            Err(StructuredError::SchemaViolation { errors, .. }) => {
                assert_eq!(errors, vec![String::from("steps: count 2 below minimum 3")]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn repair_round_can_succeed() {
        let q = Queue::new(vec![Ok("{\"verdict\": \"Excellent\"}".into()), Ok("{\"verdict\": \"partial\", \"gaps\": [\"Worm\"]}".into())]);
        let v = complete_structured(&q, &req(SchemaId::AssessmentSchema)).unwrap();
        assert_eq!(
            v,
            StructuredValue::Assessment(Assessment {
                verdict: Verdict::Partial,
                gaps: vec!["Worm".into()],
                rationale: String::new()
            })
        );
    }

    #[test]
    fn permuted_indices_are_renumbered_in_listed_order() {
        let doc = r#"{"steps": [{"index": 4, "title": "A", "objective": "a"}, {"index": 2, "title": "B", "objective": "b"},
                      {"index": 9, "title": "C", "objective": "c"}]}"#;
        let StructuredValue::Plan(d) = parse_structured(SchemaId::PlanSchema, doc).unwrap() else { panic!() };
        let idx: Vec<(u32, &str)> = d.steps.iter().map(|s| (s.index, s.title.as_str())).collect();
        assert_eq!(idx, [(1, "A"), (2, "B"), (3, "C")]);
    }

    #[test]
    fn intent_labels_are_lenient() {
        for (label, want) in [
            ("NewInquiry", Intent::NewInquiry),
            ("response_to_scaffold", Intent::ResponseToScaffold),
            ("Clarification Request", Intent::ClarificationRequest),
            ("off-topic", Intent::OffTopic),
        ] {
            let text = format!("{{\"intent\": \"{label}\"}}");
            assert_eq!(parse_structured(SchemaId::IntentSchema, &text), Ok(StructuredValue::Intent(want)));
        }
    }

    #[test]
    fn gateway_errors_pass_through() {
        let q = Queue::new(vec![Err(GatewayError::Timeout { elapsed_ms: 5 })]);
        assert_eq!(
            complete_structured(&q, &req(SchemaId::IntentSchema)),
            Err(StructuredError::Gateway(GatewayError::Timeout { elapsed_ms: 5 }))
        );
    }
}
