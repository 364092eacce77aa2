//! Prompt assembly for base and personality prompting.

use crate::data::Item;
use crate::labels::{Label, LabelScheme};

use super::personas::Trait;

const SIX_WAY_TASK: &str = "Assuming s1 is true, choose the statement that seems most accurate for s2:
A. Absolutely must be false
B. Is more likely to be false
C. Has strong reasons to be true and strong reasons to be false
D. Has no reasons to be either true or false
E. Is more likely to be true
F. Absolutely must be true";

const THREE_WAY_TASK: &str = "Choose one option about the inferential relationship between s1 and s2:
Entailment: s2 entails s1
Contradiction: s2 contradicts s1
Neutral: Cannot pick either of the above or both are likely";

const ANSWER_INSTRUCTION: &str =
    "Pick exactly one option and write it on the first line. Do not write anything else.";

const FIRST_ANSWER_INSTRUCTION: &str =
    "Pick the first answer that you think of based on your personality and nothing else.";

/// The task block describing the label options of `scheme`.
pub fn task_definition(scheme: LabelScheme) -> &'static str {
    match scheme {
        LabelScheme::SixWay => SIX_WAY_TASK,
        LabelScheme::ThreeWay => THREE_WAY_TASK,
    }
}

/// System prompt for base prompting.
pub fn build_base_prompt(scheme: LabelScheme) -> String {
    format!("{} {ANSWER_INSTRUCTION}", task_definition(scheme))
}

/// System prompt for personality prompting.
///
/// The persona sentence already ends with a period, which doubles as the
/// period after the `{personality}` slot.
pub fn build_personality_prompt(persona: Trait, scheme: LabelScheme) -> String {
    let personality = persona.persona().trim_end_matches('.');
    format!(
        "Here\u{2019}s your personality: {personality}. Focus on this personality and respond just like a person who has this personality. {} {FIRST_ANSWER_INSTRUCTION} {ANSWER_INSTRUCTION}",
        task_definition(scheme)
    )
}

/// User prompt: the premise as `s1` and the conclusion as `s2`.
pub fn build_user_prompt(item: &Item) -> String {
    format!("s1: {}\ns2: {}", item.premise, item.conclusion)
}

/// The ways a model may legitimately write an option on its first line.
pub fn canonical_renderings(label: Label) -> Vec<String> {
    match label.scheme() {
        LabelScheme::SixWay => vec![
            label.code().to_string(),
            format!("{}. {}", label.code(), label.text()),
            label.text().to_string(),
        ],
        LabelScheme::ThreeWay => vec![
            label.code().to_string(),
            format!("{}: {}", label.code(), label.text()),
            label.text().to_string(),
        ],
    }
}
