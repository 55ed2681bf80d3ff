//! Learner, plan and session values shared by every other module.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

pub const MIN_PLAN_STEPS: usize = 3;
pub const MAX_PLAN_STEPS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LearnerRole {
    Student,
    Officer,
    Legal,
    Educator,
    Other,
}

impl LearnerRole {
    pub const ALL: [LearnerRole; 5] = [
        LearnerRole::Student,
        LearnerRole::Officer,
        LearnerRole::Legal,
        LearnerRole::Educator,
        LearnerRole::Other,
    ];
}

/// Self-reported familiarity with AI tools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Familiarity {
    None,
    Occasional,
    Frequent,
}

impl Familiarity {
    pub const ALL: [Familiarity; 3] = [Familiarity::None, Familiarity::Occasional, Familiarity::Frequent];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnerProfile {
    pub learner_id: String,
    pub role: LearnerRole,
    pub self_reported_familiarity: Familiarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepStatus {
    Pending,
    Active,
    Completed,
    Deferred,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub index: u32,
    pub title: String,
    pub objective: String,
    pub status: StepStatus,
    /// Concepts a comprehension check on this step should find evidence of.
    #[serde(default)]
    pub concepts: Vec<String>,
    /// Gaps left open after a mastered-with-gaps assessment; the next
    /// comprehension check targets these instead of `concepts`.
    #[serde(default)]
    pub sub_focus: Vec<String>,
    /// True for steps inserted by plan adaptation after repeated struggle.
    #[serde(default)]
    pub remedial: bool,
    /// Remedial steps inserted on behalf of this step so far.
    #[serde(default)]
    pub remedial_inserted: u32,
}

impl PlanStep {
    pub fn new(index: u32, title: impl Into<String>, objective: impl Into<String>, status: StepStatus) -> Self {
        Self {
            index,
            title: title.into(),
            objective: objective.into(),
            status,
            concepts: Vec::new(),
            sub_focus: Vec::new(),
            remedial: false,
            remedial_inserted: 0,
        }
    }

    /// Concepts the next comprehension check should probe.
    pub fn check_concepts(&self) -> &[String] {
        if self.sub_focus.is_empty() {
            &self.concepts
        } else {
            &self.sub_focus
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearningPlan {
    pub plan_id: String,
    pub topic: String,
    pub steps: Vec<PlanStep>,
    pub created_turn: u64,
    pub revision: u32,
}

impl LearningPlan {
    pub fn active_step(&self) -> Option<&PlanStep> {
        self.steps.iter().find(|s| s.status == StepStatus::Active)
    }

    pub fn active_position(&self) -> Option<usize> {
        self.steps.iter().position(|s| s.status == StepStatus::Active)
    }

    /// A plan is complete once no step is waiting or in progress.
    pub fn is_complete(&self) -> bool {
        !self
            .steps
            .iter()
            .any(|s| matches!(s.status, StepStatus::Pending | StepStatus::Active))
    }

    pub fn completed_titles(&self) -> Vec<&str> {
        self.steps
            .iter()
            .filter(|s| s.status == StepStatus::Completed)
            .map(|s| s.title.as_str())
            .collect()
    }
}

/// Support intensity. Ordered so that `HighSupport > Guided > Low`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScaffoldLevel {
    Low,
    Guided,
    HighSupport,
}

impl ScaffoldLevel {
    pub const ALL: [ScaffoldLevel; 3] = [ScaffoldLevel::HighSupport, ScaffoldLevel::Guided, ScaffoldLevel::Low];

    pub fn support_rank(self) -> u8 {
        match self {
            ScaffoldLevel::Low => 0,
            ScaffoldLevel::Guided => 1,
            ScaffoldLevel::HighSupport => 2,
        }
    }

    pub fn from_rank(rank: u8) -> Self {
        match rank {
            0 => ScaffoldLevel::Low,
            1 => ScaffoldLevel::Guided,
            _ => ScaffoldLevel::HighSupport,
        }
    }

    pub fn phase_label(self) -> &'static str {
        match self {
            ScaffoldLevel::HighSupport => "I Do",
            ScaffoldLevel::Guided => "We Do",
            ScaffoldLevel::Low => "You Do",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Intent {
    NewInquiry,
    ResponseToScaffold,
    ClarificationRequest,
    OffTopic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Mastered,
    Partial,
    Struggling,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assessment {
    pub verdict: Verdict,
    pub gaps: Vec<String>,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingCheck {
    pub question: String,
    pub step_index: u32,
    pub expected_concepts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn_index: u64,
    pub user_message: String,
    pub intent: Intent,
    pub scaffold_used: ScaffoldLevel,
    pub agent_response_id: String,
    /// Agent reply text, kept so later prompts can carry conversation history.
    #[serde(default)]
    pub agent_text: String,
    pub citations: Vec<String>,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub learner: LearnerProfile,
    pub turns: Vec<TurnRecord>,
    pub plan: Option<LearningPlan>,
    /// Plans replaced by a later new inquiry, oldest first.
    #[serde(default)]
    pub previous_plans: Vec<LearningPlan>,
    pub scaffold: ScaffoldLevel,
    pub pending_check: Option<PendingCheck>,
    pub assessment_history: Vec<Assessment>,
}

impl SessionState {
    /// A session with no turns. Support starts at the top level until a plan
    /// sets it from the learner profile.
    pub fn new(session_id: impl Into<String>, learner: LearnerProfile) -> Self {
        Self {
            session_id: session_id.into(),
            learner,
            turns: Vec::new(),
            plan: None,
            previous_plans: Vec::new(),
            scaffold: ScaffoldLevel::HighSupport,
            pending_check: None,
            assessment_history: Vec::new(),
        }
    }

    pub fn next_turn_index(&self) -> u64 {
        self.turns.len() as u64
    }

    /// Completed step titles across the current and all previous plans.
    pub fn completed_step_count(&self) -> usize {
        self.previous_plans
            .iter()
            .chain(self.plan.iter())
            .map(|p| p.steps.iter().filter(|s| s.status == StepStatus::Completed).count())
            .sum()
    }

    /// Structural invariants of the session value; empty when all hold.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.pending_check.is_some() && self.plan.is_none() {
            out.push(String::from("pending_check: set without a plan"));
        }
        if let (Some(check), Some(plan)) = (&self.pending_check, &self.plan) {
            match plan.active_step() {
                Some(step) if step.index == check.step_index => {}
                _ => out.push(format!(
                    "pending_check: step_index {} is not the active step",
                    check.step_index
                )),
            }
        }
        for (i, t) in self.turns.iter().enumerate() {
            if t.turn_index != i as u64 {
                out.push(format!("turns: position {i} carries turn_index {}", t.turn_index));
            }
        }
        out
    }
}

/// Check every structural rule of a learning plan.
///
/// Returns one human-readable violation per broken rule, each prefixed with
/// the field it concerns. An empty list means the plan is well formed.
pub fn validate_plan(plan: &LearningPlan) -> Vec<String> {
    let mut out = Vec::new();
    let n = plan.steps.len();
    if n < MIN_PLAN_STEPS {
        out.push(format!("steps: count {n} below minimum {MIN_PLAN_STEPS}"));
    } else if n > MAX_PLAN_STEPS {
        out.push(format!("steps: count {n} above maximum {MAX_PLAN_STEPS}"));
    }

    for (pos, step) in plan.steps.iter().enumerate() {
        let expected = pos as u32 + 1;
        if step.index != expected {
            out.push(format!(
                "steps[{pos}].index: {} breaks contiguous numbering, expected {expected}",
                step.index
            ));
        }
        if step.title.trim().is_empty() {
            out.push(format!("steps[{pos}].title: must be non-empty"));
        }
        if step.objective.trim().is_empty() {
            out.push(format!("steps[{pos}].objective: must be non-empty"));
        }
    }

    let active = plan.steps.iter().filter(|s| s.status == StepStatus::Active).count();
    let open = plan
        .steps
        .iter()
        .any(|s| matches!(s.status, StepStatus::Pending | StepStatus::Active));
    if active > 1 || (open && active != 1) {
        out.push(format!(
            "steps.status: {active} steps Active, exactly one Active step required while the plan is incomplete"
        ));
    }
    out
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use alloc::vec;

    pub fn malware_plan() -> LearningPlan {
        let titles = [
            ("Definitions & Vectors", "Name the main malware categories and how each one infects a system"),
            ("Baseline Hygiene", "Apply patching, least privilege and safe browsing habits"),
            ("Anti-malware Tools", "Choose and configure endpoint protection"),
            ("Layered Defenses", "Combine network, host and user controls into defense in depth"),
            ("Incident Response", "Contain, eradicate and document an infection"),
        ];
        let steps = titles
            .iter()
            .enumerate()
            .map(|(i, (t, o))| {
                let status = if i == 0 { StepStatus::Active } else { StepStatus::Pending };
                let mut step = PlanStep::new(i as u32 + 1, *t, *o, status);
                if i == 0 {
                    step.concepts = vec![
                        "Virus".into(),
                        "Worm".into(),
                        "Ransomware".into(),
                        "Trojan".into(),
                        "Rootkit".into(),
                    ];
                }
                step
            })
            .collect();
        LearningPlan {
            plan_id: "00000000000000000000000000000001".into(),
            topic: "What should I do to defend against malware?".into(),
            steps,
            created_turn: 0,
            revision: 0,
        }
    }

    pub fn novice() -> LearnerProfile {
        LearnerProfile {
            learner_id: "learner-1".into(),
            role: LearnerRole::Student,
            self_reported_familiarity: Familiarity::Occasional,
        }
    }
}
