use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::RoundInput;
use crate::env::CandidateSet;
use crate::memory::MemoryView;

const STANDARD: &str = include_str!("../../assets/prompts/standard.txt");
const MEMORY_AUGMENTED: &str = include_str!("../../assets/prompts/memory_augmented.txt");
const LONG_HORIZON: &str = include_str!("../../assets/prompts/long_horizon.txt");
pub(crate) const MEMORY_TOOL: &str = include_str!("../../assets/prompts/memory_tool.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptTemplate {
    /// Single case, no memory.
    #[default]
    Standard,
    /// Single case with the memory tool available.
    MemoryAugmented,
    /// Sequential stream with persistent memory.
    LongHorizon,
}

impl PromptTemplate {
    pub fn uses_memory(self) -> bool {
        !matches!(self, PromptTemplate::Standard)
    }

    pub fn source(self) -> &'static str {
        match self {
            PromptTemplate::Standard => STANDARD,
            PromptTemplate::MemoryAugmented => MEMORY_AUGMENTED,
            PromptTemplate::LongHorizon => LONG_HORIZON,
        }
    }
}

fn render_choices(candidates: &CandidateSet) -> String {
    let mut out = String::new();
    for label in candidates.labels() {
        match candidates.descriptions().get(label) {
            Some(desc) => writeln!(out, "- {label}: {desc}"),
            None => writeln!(out, "- {label}"),
        }
        .expect("writing to a String cannot fail");
    }
    out.trim_end().to_owned()
}

/// Text form of a memory listing, used in prompts and tool results.
pub fn render_memory(view: &MemoryView) -> String {
    let mut out = String::from("Short-term cases:\n");
    if view.cases.is_empty() {
        out.push_str("(none)\n");
    }
    for c in &view.cases {
        let _ = writeln!(
            out,
            "[{}] summary: {} | diagnosis: {} | feedback: {}",
            c.index, c.record.case_summary, c.record.diagnosis, c.record.feedback
        );
    }
    out.push_str("Long-term rules:\n");
    if view.rules.is_empty() {
        out.push_str("(none)\n");
    }
    for r in &view.rules {
        let _ = writeln!(out, "- {r}");
    }
    out.trim_end().to_owned()
}

/// Fills the round's template placeholders.
pub fn render_prompt(input: &RoundInput) -> String {
    let choices = render_choices(&input.candidates);
    let memory = render_memory(&input.memory_view);
    match input.template {
        PromptTemplate::Standard => STANDARD
            .replace("{current_case_prompt}", &input.case.profile)
            .replace("{current_choices}", &choices),
        PromptTemplate::MemoryAugmented => MEMORY_AUGMENTED
            .replace("{current_case_prompt}", &input.case.profile)
            .replace("{current_choices}", &choices)
            .replace("{short_term_memory}", &memory),
        PromptTemplate::LongHorizon => LONG_HORIZON
            .replace("{M}", &memory)
            .replace("Round t", &format!("Round {}", input.round_index))
            .replace("At round t,", &format!("At round {},", input.round_index))
            .replace("{x_t}", &input.case.profile)
            .replace("{Y_t}", &choices),
    }
}

pub(crate) fn render_tool_instructions(capacity: usize) -> String {
    MEMORY_TOOL
        .replace("{tool_name}", super::MEMORY_TOOL_NAME)
        .replace("{capacity}", &capacity.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::PresentedCase;
    use crate::memory::{AgentState, CaseRecord, Rule};

    fn input(template: PromptTemplate) -> RoundInput {
        let mut state = AgentState::new(3).unwrap();
        state
            .append_case(CaseRecord::new("fever and rash", "Measles", "Correct. Ground truth: Measles."))
            .unwrap();
        state.consolidate_rules(&[Rule::new("rash + fever: think viral").unwrap()]).unwrap();
        RoundInput {
            case: PresentedCase {
                id: "c7".into(),
                profile: "A 4-year-old with koplik spots.".into(),
            },
            candidates: CandidateSet::new(vec!["Measles".into(), "Rubella".into()]).unwrap(),
            memory_view: state.list_memory(),
            round_index: 7,
            horizon: 100,
            template,
        }
    }

    #[test]
    fn templates_keep_their_placeholders() {
        assert!(STANDARD.contains("{current_case_prompt}") && STANDARD.contains("{current_choices}"));
        assert!(MEMORY_AUGMENTED.contains("{short_term_memory}"));
        for p in ["{M}", "{x_t}", "{Y_t}"] {
            assert!(LONG_HORIZON.contains(p));
        }
    }

    #[test]
    fn rendering_fills_every_placeholder() {
        for t in [
            PromptTemplate::Standard,
            PromptTemplate::MemoryAugmented,
            PromptTemplate::LongHorizon,
        ] {
            let text = render_prompt(&input(t));
            assert!(text.contains("koplik spots"), "{t:?}");
            assert!(text.contains("- Rubella"), "{t:?}");
            assert!(!text.contains("{current_") && !text.contains("{x_t}") && !text.contains("{M}"));
            assert_eq!(text.contains("think viral"), t.uses_memory(), "{t:?}");
        }
        assert!(render_prompt(&input(PromptTemplate::LongHorizon)).contains("Input (Round 7)"));
    }

    #[test]
    fn memory_listing_format() {
        let view = input(PromptTemplate::LongHorizon).memory_view;
        let text = render_memory(&view);
        assert!(text.starts_with("Short-term cases:\n[0] summary: fever and rash"));
        assert!(text.ends_with("- rash + fever: think viral"));
        assert_eq!(
            render_memory(&MemoryView::default()),
            "Short-term cases:\n(none)\nLong-term rules:\n(none)"
        );
    }
}
