//! Plan adaptation after an assessment.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::domain::{Assessment, LearningPlan, PlanStep, StepStatus, Verdict, MAX_PLAN_STEPS};

/// Remedial steps allowed per original step before it is deferred.
pub const MAX_REMEDIAL_PER_STEP: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlanAction {
    /// A new plan was generated this turn.
    Created,
    /// The active step was completed and the next one activated.
    Advanced,
    /// Core of the step mastered; remaining gaps become the step's focus.
    AdvancedWithinStep,
    /// A remedial step was inserted; `revision` was bumped.
    Revised,
    /// No structural change.
    Held,
    /// The remedial cap was hit; the step was deferred for the instructor.
    Escalated,
}

fn trailing_struggles(history: &[Assessment]) -> usize {
    history.iter().rev().take_while(|a| a.verdict == Verdict::Struggling).count()
}

fn activate_next_pending(steps: &mut [PlanStep], from: usize) {
    if let Some(s) = steps[from..].iter_mut().find(|s| s.status == StepStatus::Pending) {
        s.status = StepStatus::Active;
    }
}

/// Update the plan for the assessment at the end of `history`.
///
/// Completed steps are never touched. A remedial step is inserted in front
/// of the active step on every second consecutive `Struggling` verdict, up
/// to [`MAX_REMEDIAL_PER_STEP`] per original step and never beyond the
/// maximum plan length; past either limit the step (and any remedial steps
/// queued for it) is deferred instead.
pub fn adapt_plan(plan: &LearningPlan, history: &[Assessment]) -> (LearningPlan, PlanAction) {
    let mut plan = plan.clone();
    let (Some(last), Some(pos)) = (history.last(), plan.active_position()) else {
        return (plan, PlanAction::Held);
    };

    let action = match last.verdict {
        Verdict::Mastered if last.gaps.is_empty() => {
            let step = &mut plan.steps[pos];
            step.status = StepStatus::Completed;
            step.sub_focus.clear();
            activate_next_pending(&mut plan.steps, pos + 1);
            PlanAction::Advanced
        }
        Verdict::Mastered => {
            plan.steps[pos].sub_focus = last.gaps.clone();
            PlanAction::AdvancedWithinStep
        }
        Verdict::Partial => {
            if !last.gaps.is_empty() {
                plan.steps[pos].sub_focus = last.gaps.clone();
            }
            PlanAction::Held
        }
        Verdict::Struggling => {
            let streak = trailing_struggles(history);
            if streak >= 2 && streak.is_multiple_of(2) {
                remediate(&mut plan, pos)
            } else {
                PlanAction::Held
            }
        }
    };
    (plan, action)
}

fn remediate(plan: &mut LearningPlan, pos: usize) -> PlanAction {
    // Remedial steps sit in front of the step they serve.
    let anchor = plan.steps[pos..]
        .iter()
        .position(|s| !s.remedial)
        .map_or(pos, |off| pos + off);

    let room = plan.steps.len() < MAX_PLAN_STEPS;
    if room && plan.steps[anchor].remedial_inserted < MAX_REMEDIAL_PER_STEP {
        let target = &plan.steps[anchor];
        let concepts: Vec<String> = plan.steps[pos].check_concepts().to_vec();
        let mut step = PlanStep::new(
            0,
            format!("Review: {}", target.title),
            format!("Rebuild the prerequisites for \"{}\" with worked examples", target.title),
            StepStatus::Active,
        );
        step.remedial = true;
        step.concepts = concepts;
        plan.steps[pos].status = StepStatus::Pending;
        plan.steps[anchor].remedial_inserted += 1;
        plan.steps.insert(pos, step);
        for (i, s) in plan.steps.iter_mut().enumerate() {
            s.index = i as u32 + 1;
        }
        plan.revision += 1;
        PlanAction::Revised
    } else {
        for s in &mut plan.steps[pos..=anchor] {
            if matches!(s.status, StepStatus::Active | StepStatus::Pending) {
                s.status = StepStatus::Deferred;
            }
        }
        activate_next_pending(&mut plan.steps, anchor + 1);
        PlanAction::Escalated
    }
}
