//! Prompt assembly for the teaching turn and the three structured calls.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::domain::{LearnerProfile, PendingCheck, SessionState};
use crate::gateway::{ChatMessage, GenParams, PromptBundle};
use crate::rag::GroundingContext;
use crate::scaffold::{ScaffoldDirective, CHECK_MARKER};

pub const CITE_INSTRUCTION: &str = "Base every factual statement on the course materials above and cite \
the supporting source with its [SRC:...] marker. If the materials do not contain the answer, say that \
the course materials do not cover it instead of guessing.";

pub const NO_MATERIALS_CLAUSE: &str = "No course materials were retrieved for this turn. Answer only from \
general pedagogy, state that course materials were not found, and do not present legal or technical \
specifics as verified.";

pub const CLARIFY_NOTE: &str = "The learner asked for clarification of your last question. Rephrase it \
more simply, give a small hint, and ask it again. Do not evaluate an answer this turn.";

pub const OFF_TOPIC_NOTE: &str = "The learner's message is outside the current learning plan. Respond \
briefly and courteously, then steer the conversation back to the current step.";

pub const ESCALATION_NOTE: &str = "The learner has struggled repeatedly with the previous step, so it was \
deferred. Acknowledge the difficulty without judgement, suggest they consult their instructor about it, \
and continue with the next step.";

/// Teaching-turn bundle: persona, directive, plan position, grounding and
/// situational notes in the system text; the last `history_window` turns
/// plus the new message as conversation.
pub fn compose(
    persona: &str,
    directive: &ScaffoldDirective,
    context: &GroundingContext,
    session: &SessionState,
    user_message: &str,
    history_window: usize,
    notes: &[String],
) -> PromptBundle {
    let mut sys = String::from(persona.trim_end());
    sys.push_str("\n\n");
    sys.push_str(&directive.strategy_text);

    if let Some(plan) = &session.plan {
        sys.push_str(&format!("\n\nLearning plan: {}", plan.topic));
        for s in &plan.steps {
            sys.push_str(&format!("\n{}. {} [{:?}]", s.index, s.title, s.status));
        }
        if let Some(step) = plan.active_step() {
            sys.push_str(&format!("\nCurrent step {}: {}. Objective: {}", step.index, step.title, step.objective));
            let focus = step.check_concepts();
            if !focus.is_empty() {
                sys.push_str(&format!("\nFocus concepts: {}", focus.join(", ")));
            }
        } else {
            sys.push_str("\nEvery step of the plan is finished; consolidate and suggest what to study next.");
        }
    }

    for note in notes {
        sys.push_str("\n\n");
        sys.push_str(note);
    }

    if context.is_empty() {
        sys.push_str("\n\n");
        sys.push_str(NO_MATERIALS_CLAUSE);
    } else {
        sys.push_str("\n\nCourse materials:\n");
        sys.push_str(&context.text);
        sys.push('\n');
        sys.push_str(CITE_INSTRUCTION);
    }

    let skip = session.turns.len().saturating_sub(history_window);
    let mut messages = Vec::new();
    for t in &session.turns[skip..] {
        messages.push(ChatMessage::user(t.user_message.clone()));
        if !t.agent_text.is_empty() {
            messages.push(ChatMessage::assistant(t.agent_text.clone()));
        }
    }
    messages.push(ChatMessage::user(user_message));

    PromptBundle {
        system_text: sys,
        messages,
        params: GenParams::teaching(),
    }
}

pub fn intent_bundle(session: &SessionState, message: &str) -> PromptBundle {
    let pending = session
        .pending_check
        .as_ref()
        .map_or_else(|| String::from("none"), |c| c.question.clone());
    let step = session
        .plan
        .as_ref()
        .and_then(|p| p.active_step())
        .map_or_else(|| String::from("none"), |s| s.title.clone());
    let sys = format!(
        "You are the latent reasoning stage of a tutoring agent. Classify the learner's latest message.\n\
         Pending check: {pending}\n\
         Current step: {step}\n\
         NewInquiry: a new learning goal or question. ResponseToScaffold: an attempt to answer the pending check. \
         ClarificationRequest: asks to rephrase or explain the pending check. OffTopic: unrelated to the course."
    );
    PromptBundle {
        system_text: sys,
        messages: alloc::vec![ChatMessage::user(format!("Learner message: {message}"))],
        params: GenParams::structured(),
    }
}

pub fn plan_bundle(topic: &str, profile: &LearnerProfile, rejected: Option<&[String]>) -> PromptBundle {
    let mut sys = format!(
        "You are the planning module of a tutoring agent. Decompose the learner's goal into an ordered \
         pedagogical sequence that covers prerequisites before advanced material. For each step give a short \
         title, a one-sentence objective, and the key concepts a comprehension check should find.\n\
         Learner role: {:?}. Familiarity with AI tools: {:?}.",
        profile.role, profile.self_reported_familiarity
    );
    if let Some(errors) = rejected {
        sys.push_str("\nA previous plan was rejected for: ");
        sys.push_str(&errors.join("; "));
        sys.push_str(". Use between 3 and 9 steps, each with a non-empty title and objective.");
    }
    PromptBundle {
        system_text: sys,
        messages: alloc::vec![ChatMessage::user(format!("Learning goal: {topic}"))],
        params: GenParams::structured(),
    }
}

pub fn assessment_bundle(check: &PendingCheck, message: &str) -> PromptBundle {
    let sys = format!(
        "You assess a learner's answer to a comprehension check.\n\
         Question: {}\n\
         Expected concepts: {}\n\
         Mastered: the core of the answer is correct (list any expected concepts still missing as gaps). \
         Partial: some correct ideas mixed with errors. Struggling: little or no correct evidence.",
        check.question,
        check.expected_concepts.join(", ")
    );
    PromptBundle {
        system_text: sys,
        messages: alloc::vec![ChatMessage::user(format!("Learner answer: {message}"))],
        params: GenParams::structured(),
    }
}

/// The question the model put after the check marker, if any.
pub fn extract_check_question(text: &str) -> Option<String> {
    let marker = CHECK_MARKER.to_ascii_lowercase();
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        // ASCII lowering keeps byte offsets aligned with `line`.
        let lower = line.to_ascii_lowercase();
        let Some(at) = lower.find(&marker) else { continue };
        let rest = clean(&line[at + marker.len()..]);
        if !rest.is_empty() {
            return Some(rest);
        }
        return lines.map(clean).find(|l| !l.is_empty());
    }
    None
}

fn clean(s: &str) -> String {
    let t = s.trim().trim_matches(|c: char| c == '*' || c == '_' || c == '"' || c.is_whitespace());
    String::from(t.trim())
}
