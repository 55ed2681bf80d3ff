//! Shared helpers for the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::Rng;
use tutor::config::BUNDLED_PERSONA;
use tutor::llm::{Script, ScriptedProvider};
use tutor::{Tutor, TutorParts};
use tutor_core::ids::derive_id;
use tutor_core::rag::NgramEmbedder;
use tutor_core::{
    Assessment, CycleConfig, Familiarity, FixedClock, Intent, LearnerProfile, LearnerRole, LearningPlan, PendingCheck,
    PlanStep, ScaffoldLevel, SessionState, StepStatus, TurnEngine, TurnRecord, Verdict, VectorIndex,
};

pub const CLOCK_MS: u64 = 1_767_225_600_000;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn generic_script() -> Script {
    Script::load(&fixtures().join("generic/provider.json")).expect("generic script")
}

/// Every rule answers after `delay_ms`, to widen race windows.
pub fn slow_generic_script(delay_ms: u64) -> Script {
    let mut s = generic_script();
    for r in &mut s.rules {
        r.delay_ms = delay_ms;
    }
    s
}

pub fn corpus_index() -> VectorIndex {
    let embedder = NgramEmbedder::new(NgramEmbedder::DEFAULT_DIM);
    tutor::corpus::ingest(&fixtures().join("corpus"), &embedder, "ngram3:256", &Default::default())
        .expect("corpus ingests")
        .index
}

/// Learner messages the generic script knows how to answer.
pub const GENERIC_MESSAGES: &[&str] = &[
    "topic: how do I handle a seized phone?",
    "topic: explain imaging",
    "answer correct: isolate it, image it, hash it",
    "answer with gaps: I would copy the disk",
    "answer partly: unplug everything and write it down",
    "answer wrong: just open the files and look",
    "answer ???",
    "clarify that question please",
    "weather is nice today",
    "garbled input",
];

pub fn random_messages(rng: &mut StdRng, n: usize) -> Vec<String> {
    let mut out = vec![GENERIC_MESSAGES[0].to_string()];
    while out.len() < n {
        out.push(GENERIC_MESSAGES.choose(rng).unwrap().to_string());
    }
    out.truncate(n);
    out
}

pub fn novice(id: &str) -> LearnerProfile {
    LearnerProfile {
        learner_id: id.to_string(),
        role: LearnerRole::Student,
        self_reported_familiarity: Familiarity::Occasional,
    }
}

/// A tutor over `dir` with the scripted provider, the n-gram embedder and a
/// frozen clock.
pub fn scripted_tutor(dir: &Path, script: Script, lease_ttl: Duration) -> Tutor {
    Tutor::assemble(TutorParts {
        provider: Arc::new(ScriptedProvider::new(script)),
        embedder: Arc::new(NgramEmbedder::new(NgramEmbedder::DEFAULT_DIM)),
        embedder_id: "ngram3:256".into(),
        clock: Arc::new(FixedClock(CLOCK_MS)),
        persona: BUNDLED_PERSONA.to_string(),
        cycle: CycleConfig::default(),
        data_dir: dir.to_path_buf(),
        lease_ttl,
    })
    .expect("tutor assembles")
}

/// Rebuild a session from its user messages with a fresh provider.
pub fn replay(session: &SessionState, script: Script, index: &VectorIndex) -> SessionState {
    let provider = ScriptedProvider::new(script);
    let embedder = NgramEmbedder::new(NgramEmbedder::DEFAULT_DIM);
    let clock = FixedClock(CLOCK_MS);
    let config = CycleConfig::default();
    let engine = TurnEngine {
        provider: &provider,
        embedder: &embedder,
        index,
        clock: &clock,
        persona: BUNDLED_PERSONA,
        config: &config,
    };
    engine
        .replay(
            &session.session_id,
            session.learner.clone(),
            session.turns.iter().map(|t| t.user_message.as_str()),
        )
        .expect("replay succeeds")
}

fn text(rng: &mut StdRng) -> String {
    const PIECES: &[&str] = &["evidence", "ünïcode", "\"quoted\"", "line\nbreak", "tab\t", "🔒", "", " ", "\\", "{}"];
    let n = rng.random_range(0..6);
    (0..n).map(|_| *PIECES.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn verdict(rng: &mut StdRng) -> Verdict {
    *[Verdict::Mastered, Verdict::Partial, Verdict::Struggling].choose(rng).unwrap()
}

fn words(rng: &mut StdRng) -> Vec<String> {
    (0..rng.random_range(0..4)).map(|_| text(rng)).collect()
}

fn plan(rng: &mut StdRng, turn: u64) -> LearningPlan {
    let n = rng.random_range(3..=9);
    let statuses = [StepStatus::Pending, StepStatus::Active, StepStatus::Completed, StepStatus::Deferred];
    let steps = (0..n)
        .map(|i| {
            let mut s = PlanStep::new(i + 1, text(rng), text(rng), *statuses.choose(rng).unwrap());
            s.concepts = words(rng);
            s.sub_focus = words(rng);
            s.remedial = rng.random_bool(0.2);
            s.remedial_inserted = rng.random_range(0..=2);
            s
        })
        .collect();
    LearningPlan {
        plan_id: derive_id(&[&text(rng)]),
        topic: text(rng),
        steps,
        created_turn: turn,
        revision: rng.random_range(0..5),
    }
}

/// An arbitrary (not necessarily reachable) session for storage round trips.
pub fn random_session(rng: &mut StdRng) -> SessionState {
    let id = tutor::random_id();
    let learner = LearnerProfile {
        learner_id: text(rng),
        role: *LearnerRole::ALL.choose(rng).unwrap(),
        self_reported_familiarity: *Familiarity::ALL.choose(rng).unwrap(),
    };
    let mut s = SessionState::new(id.clone(), learner);
    let intents = [Intent::NewInquiry, Intent::ResponseToScaffold, Intent::ClarificationRequest, Intent::OffTopic];
    for i in 0..rng.random_range(0..12u64) {
        s.turns.push(TurnRecord {
            turn_index: i,
            user_message: text(rng),
            intent: *intents.choose(rng).unwrap(),
            scaffold_used: *ScaffoldLevel::ALL.choose(rng).unwrap(),
            agent_response_id: derive_id(&["response", &id, &i.to_string()]),
            agent_text: text(rng),
            citations: words(rng),
            timestamp: rng.random(),
        });
    }
    if rng.random_bool(0.7) {
        s.plan = Some(plan(rng, 0));
    }
    for t in 0..rng.random_range(0..3) {
        s.previous_plans.push(plan(rng, t));
    }
    s.scaffold = *ScaffoldLevel::ALL.choose(rng).unwrap();
    if rng.random_bool(0.5) {
        s.pending_check = Some(PendingCheck {
            question: text(rng),
            step_index: rng.random_range(1..=9),
            expected_concepts: words(rng),
        });
    }
    for _ in 0..rng.random_range(0..6) {
        s.assessment_history.push(Assessment {
            verdict: verdict(rng),
            gaps: words(rng),
            rationale: text(rng),
        });
    }
    s
}
