//! Offline replay of a scripted dialogue.
//!
//! A dialogue file names the learner, the provider script, an optional
//! corpus and the learner's messages:
//!
//! ```json
//! {
//!   "version": 1,
//!   "learner": {"learner_id": "cj-student-01", "role": "Student", "self_reported_familiarity": "Occasional"},
//!   "provider_script": "provider.json",
//!   "corpus": "../corpus",
//!   "clock_ms": 1700000000000,
//!   "messages": ["What should I do to defend against malware?", "..."]
//! }
//! ```
//!
//! Paths are relative to the dialogue file. Everything that could vary
//! between runs is pinned (session id, clock, embedder), so the output
//! files are byte-identical across runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tutor_core::ids::derive_id;
use tutor_core::rag::NgramEmbedder;
use tutor_core::{
    AgentResponse, CycleConfig, CycleTrace, Embedder, FixedClock, LearnerProfile, PendingCheck, ScaffoldLevel, SessionState,
    TurnEngine, VectorIndex,
};

use crate::config::BUNDLED_PERSONA;
use crate::corpus;
use crate::llm::ScriptedProvider;

pub const DIALOGUE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dialogue {
    pub version: u32,
    #[serde(default)]
    pub session_id: Option<String>,
    pub learner: LearnerProfile,
    pub provider_script: PathBuf,
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default)]
    pub persona: Option<PathBuf>,
    #[serde(default)]
    pub clock_ms: u64,
    #[serde(default)]
    pub config: CycleConfig,
    pub messages: Vec<String>,
}

impl Dialogue {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        let mut d: Dialogue = serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        if d.version != DIALOGUE_VERSION {
            anyhow::bail!("{}: unsupported dialogue version {}", path.display(), d.version);
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut d.provider_script);
        if let Some(p) = d.corpus.as_mut() {
            rebase(p);
        }
        if let Some(p) = d.persona.as_mut() {
            rebase(p);
        }
        Ok(d)
    }

    pub fn session_id(&self) -> String {
        self.session_id
            .clone()
            .unwrap_or_else(|| derive_id(&["simulation", &self.learner.learner_id]))
    }
}

/// One line of `trace.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub turn_index: u64,
    pub user_message: String,
    pub response_id: String,
    pub scaffold_used: ScaffoldLevel,
    pub phase_label: String,
    pub citations: Vec<String>,
    pub check: Option<PendingCheck>,
    pub trace: CycleTrace,
}

pub struct Simulation {
    pub session: SessionState,
    pub responses: Vec<AgentResponse>,
    /// The turn that failed and why; earlier turns are kept.
    pub failure: Option<(usize, String)>,
}

/// Run every message of `dialogue` through the turn engine.
pub fn run(dialogue: &Dialogue) -> anyhow::Result<Simulation> {
    let provider = ScriptedProvider::from_file(&dialogue.provider_script)?;
    let embedder = NgramEmbedder::new(NgramEmbedder::DEFAULT_DIM);
    let index = match &dialogue.corpus {
        Some(dir) => corpus::ingest(dir, &embedder, "ngram3:256", &dialogue.config.rag)?.index,
        None => VectorIndex::new(embedder.dim()),
    };
    let persona = match &dialogue.persona {
        Some(p) => fs::read_to_string(p)?,
        None => BUNDLED_PERSONA.to_string(),
    };
    let clock = FixedClock(dialogue.clock_ms);
    let engine = TurnEngine {
        provider: &provider,
        embedder: &embedder,
        index: &index,
        clock: &clock,
        persona: &persona,
        config: &dialogue.config,
    };

    let mut session = SessionState::new(dialogue.session_id(), dialogue.learner.clone());
    let mut responses = Vec::new();
    for (i, message) in dialogue.messages.iter().enumerate() {
        match engine.handle_turn(&session, message) {
            Ok((response, next)) => {
                session = next;
                responses.push(response);
            }
            Err(e) => {
                return Ok(Simulation {
                    session,
                    responses,
                    failure: Some((i, e.to_string())),
                })
            }
        }
    }
    Ok(Simulation {
        session,
        responses,
        failure: None,
    })
}

pub fn trace_lines(sim: &Simulation) -> Vec<TraceLine> {
    sim.session
        .turns
        .iter()
        .zip(&sim.responses)
        .map(|(turn, r)| TraceLine {
            turn_index: turn.turn_index,
            user_message: turn.user_message.clone(),
            response_id: r.response_id.clone(),
            scaffold_used: r.scaffold_used,
            phase_label: r.scaffold_used.phase_label().to_string(),
            citations: r.citations.clone(),
            check: r.check.clone(),
            trace: r.internal_trace.clone(),
        })
        .collect()
}

pub fn transcript(sim: &Simulation) -> String {
    let s = &sim.session;
    let mut out = String::new();
    let _ = writeln!(out, "# Session {}", s.session_id);
    let _ = writeln!(
        out,
        "Learner: {} ({:?}, familiarity {:?})",
        s.learner.learner_id, s.learner.role, s.learner.self_reported_familiarity
    );
    for (turn, r) in s.turns.iter().zip(&sim.responses) {
        let t = &r.internal_trace;
        let _ = writeln!(out, "\n## Turn {}\n", turn.turn_index);
        let _ = writeln!(out, "User: {}\n", turn.user_message);
        let _ = writeln!(
            out,
            "[intent {:?}{} | plan {:?} | scaffold {:?} -> {:?} ({})]",
            t.intent,
            if t.intent_fallback { " (fallback)" } else { "" },
            t.plan_action,
            t.scaffold_decision.before,
            t.scaffold_decision.after,
            r.scaffold_used.phase_label()
        );
        if let Some(a) = &t.assessment {
            let _ = writeln!(out, "[assessment {:?}; gaps: {}]", a.verdict, a.gaps.join(", "));
        }
        if let Some(plan) = &r.plan_snapshot {
            let steps: Vec<String> = plan
                .steps
                .iter()
                .map(|st| format!("{}. {} [{:?}]", st.index, st.title, st.status))
                .collect();
            let _ = writeln!(out, "[plan r{}: {}]", plan.revision, steps.join("; "));
        }
        let _ = writeln!(out, "\nAgent: {}", r.text.trim_end());
        if let Some(c) = &r.check {
            let _ = writeln!(out, "\n[check for step {}: {}]", c.step_index, c.question);
        }
        if !r.citations.is_empty() {
            let _ = writeln!(out, "[sources: {}]", r.citations.join(", "));
        }
    }
    if let Some((i, e)) = &sim.failure {
        let _ = writeln!(out, "\n## Turn {i} failed\n\n{e}");
    }
    out
}

/// Write `transcript.md`, `trace.jsonl` and `session.json` into `out`.
pub fn write_outputs(sim: &Simulation, out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("transcript.md"), transcript(sim))?;
    let mut lines = Vec::new();
    crate::store::write_jsonl(&mut lines, &trace_lines(sim))?;
    fs::write(out.join("trace.jsonl"), lines)?;
    let mut session = serde_json::to_vec_pretty(&sim.session)?;
    session.push(b'\n');
    fs::write(out.join("session.json"), session)?;
    Ok(())
}
