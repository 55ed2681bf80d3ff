//! Support-level policy: where a learner starts, how support fades after
//! success and how it comes back after a breakdown.

use alloc::collections::BTreeMap;
use alloc::string::String;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Assessment, Familiarity, LearnerProfile, LearnerRole, ScaffoldLevel, Verdict};

/// Line prefix the teaching prompt asks the model to put its question on.
pub const CHECK_MARKER: &str = "Check for Understanding:";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScaffoldError {
    #[error("next_level needs at least one assessment")]
    EmptyHistory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScaffoldConfig {
    /// Consecutive `Mastered` verdicts needed before support steps down.
    pub fade_on_mastered: u32,
    /// Consecutive `Struggling` verdicts that reset support to the top level.
    pub reset_after_struggling: u32,
    /// Starting level per role, before the familiarity adjustment.
    pub initial_by_role: BTreeMap<LearnerRole, ScaffoldLevel>,
}

impl Default for ScaffoldConfig {
    fn default() -> Self {
        let mut initial_by_role = BTreeMap::new();
        initial_by_role.insert(LearnerRole::Student, ScaffoldLevel::HighSupport);
        initial_by_role.insert(LearnerRole::Other, ScaffoldLevel::HighSupport);
        initial_by_role.insert(LearnerRole::Officer, ScaffoldLevel::Guided);
        initial_by_role.insert(LearnerRole::Legal, ScaffoldLevel::Guided);
        initial_by_role.insert(LearnerRole::Educator, ScaffoldLevel::Guided);
        Self {
            fade_on_mastered: 1,
            reset_after_struggling: 2,
            initial_by_role,
        }
    }
}

impl ScaffoldConfig {
    /// Level for a learner entering a fresh plan step.
    ///
    /// Frequent users of AI tools never start above `Guided`.
    pub fn initial_level(&self, profile: &LearnerProfile) -> ScaffoldLevel {
        let by_role = self
            .initial_by_role
            .get(&profile.role)
            .copied()
            .unwrap_or(ScaffoldLevel::HighSupport);
        if profile.self_reported_familiarity == Familiarity::Frequent {
            by_role.min(ScaffoldLevel::Guided)
        } else {
            by_role
        }
    }

    /// Level for the next turn given the assessment just made (last element
    /// of `history`).
    pub fn next_level(&self, current: ScaffoldLevel, history: &[Assessment]) -> Result<ScaffoldLevel, ScaffoldError> {
        let last = history.last().ok_or(ScaffoldError::EmptyHistory)?;
        let next = match last.verdict {
            Verdict::Partial => current,
            Verdict::Mastered => {
                let needed = self.fade_on_mastered.max(1) as usize;
                if trailing(history, Verdict::Mastered) >= needed {
                    step_down(current)
                } else {
                    current
                }
            }
            Verdict::Struggling => {
                let reset = self.reset_after_struggling.max(1) as usize;
                if trailing(history, Verdict::Struggling) >= reset {
                    ScaffoldLevel::HighSupport
                } else {
                    step_up(current)
                }
            }
        };
        Ok(next)
    }
}

fn trailing(history: &[Assessment], verdict: Verdict) -> usize {
    history.iter().rev().take_while(|a| a.verdict == verdict).count()
}

fn step_down(level: ScaffoldLevel) -> ScaffoldLevel {
    ScaffoldLevel::from_rank(level.support_rank().saturating_sub(1))
}

fn step_up(level: ScaffoldLevel) -> ScaffoldLevel {
    ScaffoldLevel::from_rank((level.support_rank() + 1).min(2))
}

/// How the model should teach at a given support level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaffoldDirective {
    pub level: ScaffoldLevel,
    pub phase_label: String,
    pub strategy_text: String,
    pub require_check: bool,
}

const HIGH_SUPPORT_STRATEGY: &str = "Support level: High Support (I Do), direct instruction. \
Explicitly define every concept before you use it. Model your reasoning step by step the way an \
experienced analyst would think aloud, and keep cognitive load low by building the foundational \
knowledge one idea at a time. Finish with one short comprehension question on its own line \
starting with \"Check for Understanding:\".";

const GUIDED_STRATEGY: &str = "Support level: Guided Support (We Do), collaborative inquiry. \
Do not hand over complete answers. Offer strategic hints, partial templates and guiding questions \
so the learner closes the remaining gaps with your help, and confirm what they already got right. \
Finish with one guiding question on its own line starting with \"Check for Understanding:\".";

const LOW_SUPPORT_STRATEGY: &str = "Support level: Low Support (You Do), independent application. \
Withdraw scaffolding. Pose open-ended scenarios and complex challenges that require the learner to \
synthesize what they have learned and apply it on their own. Do not supply the solution.";

/// The fixed teaching directive for a level.
pub fn directive_for(level: ScaffoldLevel) -> ScaffoldDirective {
    let (strategy, require_check) = match level {
        ScaffoldLevel::HighSupport => (HIGH_SUPPORT_STRATEGY, true),
        ScaffoldLevel::Guided => (GUIDED_STRATEGY, true),
        ScaffoldLevel::Low => (LOW_SUPPORT_STRATEGY, false),
    };
    ScaffoldDirective {
        level,
        phase_label: String::from(level.phase_label()),
        strategy_text: String::from(strategy),
        require_check,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::fixtures::novice;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn a(v: Verdict) -> Assessment {
        Assessment {
            verdict: v,
            gaps: Vec::new(),
            rationale: String::new(),
        }
    }

    const VERDICTS: [Verdict; 3] = [Verdict::Mastered, Verdict::Partial, Verdict::Struggling];

    #[test]
    fn initial_levels() {
        let cfg = ScaffoldConfig::default();
        assert_eq!(cfg.initial_level(&novice()), ScaffoldLevel::HighSupport);
        let educator = LearnerProfile {
            learner_id: "e".into(),
            role: LearnerRole::Educator,
            self_reported_familiarity: Familiarity::Frequent,
        };
        assert_eq!(cfg.initial_level(&educator), ScaffoldLevel::Guided);
        let blank = LearnerProfile {
            self_reported_familiarity: Familiarity::None,
            ..novice()
        };
        assert_eq!(cfg.initial_level(&blank), ScaffoldLevel::HighSupport);
    }

    #[test]
    fn initial_level_rule_table() {
        // Hand-written table: novices with little AI exposure get full
        // support, everyone else starts guided.
        let cfg = ScaffoldConfig::default();
        for role in LearnerRole::ALL {
            for fam in Familiarity::ALL {
                let novice_role = matches!(role, LearnerRole::Student | LearnerRole::Other);
                let expected = if novice_role && fam != Familiarity::Frequent {
                    ScaffoldLevel::HighSupport
                } else {
                    ScaffoldLevel::Guided
                };
                let p = LearnerProfile {
                    learner_id: "x".into(),
                    role,
                    self_reported_familiarity: fam,
                };
                assert_eq!(cfg.initial_level(&p), expected, "{role:?}/{fam:?}");
            }
        }
    }

    #[test]
    fn named_transitions() {
        let cfg = ScaffoldConfig::default();
        let h = |vs: &[Verdict]| vs.iter().map(|v| a(*v)).collect::<Vec<_>>();
        assert_eq!(
            cfg.next_level(ScaffoldLevel::HighSupport, &h(&[Verdict::Mastered])),
            Ok(ScaffoldLevel::Guided)
        );
        assert_eq!(cfg.next_level(ScaffoldLevel::Low, &h(&[Verdict::Mastered])), Ok(ScaffoldLevel::Low));
        assert_eq!(
            cfg.next_level(ScaffoldLevel::Low, &h(&[Verdict::Struggling, Verdict::Struggling])),
            Ok(ScaffoldLevel::HighSupport)
        );
        assert_eq!(cfg.next_level(ScaffoldLevel::Low, &[]), Err(ScaffoldError::EmptyHistory));
    }

    /// Transition table written out independently of the implementation.
    fn table(level: ScaffoldLevel, prev: Option<Verdict>, last: Verdict) -> ScaffoldLevel {
        use ScaffoldLevel::*;
        match (last, prev) {
            (Verdict::Struggling, Some(Verdict::Struggling)) => HighSupport,
            (Verdict::Struggling, _) => match level {
                Low => Guided,
                Guided | HighSupport => HighSupport,
            },
            (Verdict::Partial, _) => level,
            (Verdict::Mastered, _) => match level {
                HighSupport => Guided,
                Guided | Low => Low,
            },
        }
    }

    #[test]
    fn exhaustive_against_table() {
        let cfg = ScaffoldConfig::default();
        for level in ScaffoldLevel::ALL {
            for last in VERDICTS {
                assert_eq!(cfg.next_level(level, &[a(last)]).unwrap(), table(level, None, last));
                for prev in VERDICTS {
                    let got = cfg.next_level(level, &[a(prev), a(last)]).unwrap();
                    assert_eq!(got, table(level, Some(prev), last), "{level:?} {prev:?} {last:?}");
                }
            }
        }
    }

    #[test]
    fn directives() {
        let hs = directive_for(ScaffoldLevel::HighSupport);
        assert_eq!(hs.phase_label, "I Do");
        assert!(hs.require_check);
        assert!(hs.strategy_text.contains("define"));
        assert!(hs.strategy_text.contains("reasoning"));
        assert!(hs.strategy_text.contains(CHECK_MARKER));

        let g = directive_for(ScaffoldLevel::Guided);
        assert_eq!(g.phase_label, "We Do");
        assert!(g.strategy_text.contains("partial templates"));
        assert!(g.strategy_text.contains("guiding questions"));

        let low = directive_for(ScaffoldLevel::Low);
        assert_eq!(low.phase_label, "You Do");
        assert!(!low.require_check);
        assert!(low.strategy_text.contains("open-ended scenarios"));
        assert_eq!(directive_for(ScaffoldLevel::Low), low);
    }

    #[test]
    fn slower_fading_is_configurable() {
        let cfg = ScaffoldConfig {
            fade_on_mastered: 2,
            ..ScaffoldConfig::default()
        };
        let one = vec![a(Verdict::Partial), a(Verdict::Mastered)];
        assert_eq!(cfg.next_level(ScaffoldLevel::HighSupport, &one), Ok(ScaffoldLevel::HighSupport));
        let two = vec![a(Verdict::Mastered), a(Verdict::Mastered)];
        assert_eq!(cfg.next_level(ScaffoldLevel::HighSupport, &two), Ok(ScaffoldLevel::Guided));
    }

    proptest! {
        #[test]
        fn mastered_runs_fade_monotonically(start in 0u8..3, run in 1usize..8) {
            let cfg = ScaffoldConfig::default();
            let mut level = ScaffoldLevel::from_rank(start);
            let mut hist = Vec::new();
            for i in 0..run {
                hist.push(a(Verdict::Mastered));
                let next = cfg.next_level(level, &hist).unwrap();
                prop_assert!(next <= level);
                level = next;
                if i >= 1 {
                    prop_assert_eq!(level, ScaffoldLevel::Low);
                }
            }
        }
    }
}
