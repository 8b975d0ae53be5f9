//! Prompt assembly for the three inference modes and the path-switching
//! marker count used to analyze completions.

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EvalProblem;
use crate::retrieval::AssembledTemplate;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("mode {0} requires an assembled template")]
    MissingTemplate(PromptMode),
}

/// How the prompt is assembled: plain step-by-step scaffolding, the
/// retrieved template in the user turn, or the template injected into the
/// model's reasoning span via assistant pre-fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Cot,
    Rot,
    RotTi,
}

impl PromptMode {
    pub const ALL: [PromptMode; 3] = [PromptMode::Cot, PromptMode::Rot, PromptMode::RotTi];

    pub fn as_str(&self) -> &'static str {
        match self {
            PromptMode::Cot => "cot",
            PromptMode::Rot => "rot",
            PromptMode::RotTi => "rot_ti",
        }
    }
}

impl std::fmt::Display for PromptMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().replace('-', "_").as_str() {
            "cot" => Ok(PromptMode::Cot),
            "rot" => Ok(PromptMode::Rot),
            "rot_ti" | "rotti" => Ok(PromptMode::RotTi),
            other => Err(format!("unknown mode {other:?} (expected cot, rot, or rot_ti)")),
        }
    }
}

/// A fully rendered request: the user-turn text plus, in think-injection
/// mode, the prefix the assistant turn is pre-filled with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub mode: PromptMode,
    pub user_text: String,
    pub think_prefix: Option<String>,
    pub problem_id: String,
}

impl PromptBundle {
    /// Characters of prompt content across the user turn and any pre-fill.
    pub fn prompt_chars(&self) -> u64 {
        let prefix = self.think_prefix.as_deref().unwrap_or("");
        (self.user_text.chars().count() + prefix.chars().count()) as u64
    }
}

const COT_HEADER: &str = "Solve the following math problem efficiently and clearly. Present the solution steps logically.\n\n- For complex problems (3 steps or more):\nUse this step-by-step format:\n\nStep 1: [Concise description]\n[Brief explanation and calculations]\n\nStep 2: [Concise description]\n[Brief explanation and calculations]\n\n...\n\nRegardless of the approach, always conclude with:\n\nTherefore, the final answer is: $\\boxed{answer}$.\n\nWhere [answer] is just the final numerical answer that solves the problem. Ensure the number is clearly identifiable within the box.";

const TEMPLATE_HEADER: &str = "You are given a template to solve the problem. Use the given steps if applicable otherwise use them to guide your reasoning and present the solution steps logically to solve this problem:";

const TI_PREFIX_HEAD: &str = "I need to follow the given steps to guide me in reasoning to solve the problem. I will follow each step and modify the steps to make them match the problem and then solve the problem accordingly. The template is.";

const TI_PREFIX_TAIL: &str = "Strictly following the given steps for guidance, I will now solve the problem starting from the step 1. Using step 1";

fn numbered_steps(template: &AssembledTemplate) -> String {
    template
        .step_texts
        .iter()
        .enumerate()
        .map(|(i, text)| format!("Step {}: {}", i + 1, text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Render the prompt for a problem. Modes other than plain step-by-step
/// require the assembled template; callers without one fall back to
/// [`PromptMode::Cot`] instead of calling this with a hole in it.
pub fn render_prompt(
    problem: &EvalProblem,
    template: Option<&AssembledTemplate>,
    mode: PromptMode,
) -> Result<PromptBundle, PromptError> {
    let bundle = match mode {
        PromptMode::Cot => PromptBundle {
            mode,
            user_text: format!(
                "{COT_HEADER}\n\nProblem: {}\n\nLet's solve this step-by-step",
                problem.statement
            ),
            think_prefix: None,
            problem_id: problem.problem_id.clone(),
        },
        PromptMode::Rot => {
            let template = template.ok_or(PromptError::MissingTemplate(mode))?;
            PromptBundle {
                mode,
                user_text: format!(
                    "{TEMPLATE_HEADER}\n{}\nProblem: {}",
                    numbered_steps(template),
                    problem.statement
                ),
                think_prefix: None,
                problem_id: problem.problem_id.clone(),
            }
        }
        PromptMode::RotTi => {
            let template = template.ok_or(PromptError::MissingTemplate(mode))?;
            PromptBundle {
                mode,
                user_text: format!(
                    "{TEMPLATE_HEADER}\n\nProblem: {}",
                    problem.statement
                ),
                think_prefix: Some(format!(
                    "{TI_PREFIX_HEAD}\n{}\n{TI_PREFIX_TAIL}",
                    numbered_steps(template)
                )),
                problem_id: problem.problem_id.clone(),
            }
        }
    };
    Ok(bundle)
}

/// The default direction-change markers counted in completions.
pub const DEFAULT_MARKERS: [&str; 3] = ["however", "alternatively", "instead"];

static DEFAULT_MARKER_RE: Lazy<Regex> = Lazy::new(|| marker_regex(&DEFAULT_MARKERS));

fn marker_regex<S: AsRef<str>>(markers: &[S]) -> Regex {
    let alternation = markers
        .iter()
        .map(|m| regex::escape(m.as_ref()))
        .collect::<Vec<_>>()
        .join("|");
    Regex::new(&format!(r"(?i)\b(?:{alternation})\b")).expect("valid marker regex")
}

/// Case-insensitive, word-boundary count of direction-change discourse
/// markers in a completion, using the default marker list.
pub fn count_path_switches(text: &str) -> u64 {
    DEFAULT_MARKER_RE.find_iter(text).count() as u64
}

/// As [`count_path_switches`] but with a custom marker list.
pub fn count_path_switches_with<S: AsRef<str>>(text: &str, markers: &[S]) -> u64 {
    if markers.is_empty() {
        return 0;
    }
    marker_regex(markers).find_iter(text).count() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeId;
    use crate::retrieval::{ScoredCandidate, TerminationReason};
    use proptest::prelude::*;

    fn problem() -> EvalProblem {
        EvalProblem {
            problem_id: "p1".to_string(),
            statement: "Find $xy$.".to_string(),
            gold_answer: "25".to_string(),
            template_type: "algebraic".to_string(),
            knowledge_tags: vec![],
        }
    }

    fn template_of(steps: &[&str]) -> AssembledTemplate {
        AssembledTemplate {
            path: (0..steps.len())
                .map(|i| NodeId::new("t", i as u32))
                .collect(),
            step_texts: steps.iter().map(|s| s.to_string()).collect(),
            per_step: steps
                .iter()
                .enumerate()
                .map(|(i, _)| ScoredCandidate {
                    node: NodeId::new("t", i as u32),
                    r_q: 0.9,
                    r_s: if i == 0 { 1.0 } else { 0.0 },
                    r_f: if i == 0 { 0.0 } else { 1.0 },
                    total: 1.9,
                })
                .collect(),
            termination_reason: TerminationReason::NoCandidates,
        }
    }

    #[test]
    fn cot_prompt_has_the_boxed_directive_and_no_steps() {
        let b = render_prompt(&problem(), None, PromptMode::Cot).unwrap();
        assert!(b.user_text.contains("Find $xy$."));
        assert!(b.user_text.contains("\\boxed{answer}"));
        assert!(b.user_text.contains("Solve the following math problem"));
        assert!(!b.user_text.contains("Step 1: Take"));
        assert!(b.think_prefix.is_none());
    }

    #[test]
    fn rot_prompt_renders_one_line_per_step() {
        let t = template_of(&["Take logarithms of both sides."]);
        let b = render_prompt(&problem(), Some(&t), PromptMode::Rot).unwrap();
        assert_eq!(b.user_text.matches("Step 1:").count(), 1);
        assert_eq!(b.user_text.matches("Step 2:").count(), 0);
        assert!(b.user_text.contains("You are given a template"));
        assert!(b.think_prefix.is_none());
    }

    #[test]
    fn think_prefix_carries_every_step_verbatim_in_order() {
        let steps = ["first do A", "then do B", "finally do C"];
        let t = template_of(&steps);
        let b = render_prompt(&problem(), Some(&t), PromptMode::RotTi).unwrap();
        let prefix = b.think_prefix.as_deref().unwrap();
        assert!(!prefix.is_empty());
        let mut last = 0;
        for step in steps {
            let at = prefix[last..]
                .find(step)
                .unwrap_or_else(|| panic!("step {step:?} missing or out of order"));
            last += at + step.len();
        }
        // The template steps appear in the pre-fill, not the user turn.
        assert!(!b.user_text.contains("first do A"));
    }

    #[test]
    fn template_modes_require_a_template() {
        assert!(matches!(
            render_prompt(&problem(), None, PromptMode::Rot),
            Err(PromptError::MissingTemplate(PromptMode::Rot))
        ));
        assert!(matches!(
            render_prompt(&problem(), None, PromptMode::RotTi),
            Err(PromptError::MissingTemplate(PromptMode::RotTi))
        ));
    }

    #[test]
    fn distinct_step_lists_yield_distinct_prompts() {
        let a = render_prompt(&problem(), Some(&template_of(&["x"])), PromptMode::Rot).unwrap();
        let b = render_prompt(&problem(), Some(&template_of(&["y"])), PromptMode::Rot).unwrap();
        assert_ne!(a.user_text, b.user_text);
        let c = render_prompt(&problem(), Some(&template_of(&["x"])), PromptMode::Rot).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn marker_counting_matches_hand_counts() {
        assert_eq!(count_path_switches(""), 0);
        assert_eq!(count_path_switches("However, X. Instead, Y."), 2);
        assert_eq!(count_path_switches("showever"), 0);
        assert_eq!(count_path_switches("HOWEVER however HoWeVeR"), 3);
        assert_eq!(
            count_path_switches("Alternatively, instead of that; however..."),
            3
        );
    }

    #[test]
    fn custom_marker_lists_are_honored() {
        assert_eq!(count_path_switches_with("wait, what? wait!", &["wait"]), 2);
        assert_eq!(count_path_switches_with::<&str>("however", &[]), 0);
    }

    proptest! {
        #[test]
        fn marker_count_is_case_invariant(s in "[a-zA-Z ,.]{0,120}") {
            prop_assert_eq!(
                count_path_switches(&s),
                count_path_switches(&s.to_uppercase())
            );
        }

        #[test]
        fn marker_count_is_additive_over_spaced_concatenation(
            a in "[a-z ,.]{0,60}",
            b in "[a-z ,.]{0,60}",
        ) {
            let joined = format!("{a} {b}");
            prop_assert_eq!(
                count_path_switches(&joined),
                count_path_switches(&a) + count_path_switches(&b)
            );
        }
    }
}
