use serde::{Deserialize, Serialize};

use crate::env::{self, Action, EnvState};
use crate::zoo::{render_prompt, ProblemInstance, PromptMode};

/// Separates the per-instance stable block from the per-call dynamic block.
pub const CHECKPOINT_MARKER: &str = "--- verifier checkpoint below ---";

/// Most blocked actions listed in a repair prompt.
pub const MAX_BLOCKED: usize = 5;

/// What the repair prompt shows about the verified prefix and its boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointView {
    pub prefix_tail: Vec<String>,
    pub prefix_len: usize,
    pub boundary_state_text: String,
    pub legal_actions_text: String,
    pub blocked_text: String,
    pub error_text: String,
}

impl CheckpointView {
    /// `failed` is the action rejected at the boundary, if there was one.
    pub fn new(prefix: &[Action], boundary: &EnvState, failed: Option<&Action>, error: &str, tail: usize) -> Self {
        let start = prefix.len().saturating_sub(tail);
        Self {
            prefix_tail: prefix[start..].iter().map(ToString::to_string).collect(),
            prefix_len: prefix.len(),
            boundary_state_text: env::render_state(boundary),
            legal_actions_text: env::plan_text(&env::legal_actions(boundary)),
            blocked_text: env::plan_text(&blocked(boundary, failed)),
            error_text: error.to_string(),
        }
    }
}

/// Illegal actions at `state` sharing the failed action's operator.
pub fn blocked(state: &EnvState, failed: Option<&Action>) -> Vec<Action> {
    let Some(failed) = failed else { return Vec::new() };
    if failed.env() != state.env() {
        return Vec::new();
    }
    let legal = env::legal_actions(state);
    env::action_universe(state)
        .into_iter()
        .filter(|a| a.op_name() == failed.op_name() && !legal.contains(a))
        .take(MAX_BLOCKED)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepairOptions {
    /// Show the executed-move count and the recent-move tail.
    pub show_prefix: bool,
    /// Ask for a whole plan from the initial state instead of a suffix.
    pub from_initial: bool,
    /// The `K` in the output contract.
    pub max_moves: usize,
}

pub fn build_pot_prompt(instance: &ProblemInstance) -> String {
    render_prompt(instance, PromptMode::Pot)
}

pub fn build_cot_prompt(instance: &ProblemInstance) -> String {
    render_prompt(instance, PromptMode::Cot)
}

/// The cacheable part of a repair prompt, ending with the marker line.
pub fn repair_stable_block(instance: &ProblemInstance, opts: &RepairOptions) -> String {
    let origin = if opts.from_initial { "the initial state" } else { "the current verified state" };
    format!(
        "{}\nGoal state: {}\nWrite Python code that prints exactly one line:\n  moves = [...]\n\
         containing up to {} primitive moves to apply from {origin}.\n{CHECKPOINT_MARKER}\n",
        instance.natural_language_prompt,
        instance.goal.render(),
        opts.max_moves,
    )
}

pub fn build_repair_prompt(instance: &ProblemInstance, view: &CheckpointView, opts: &RepairOptions) -> String {
    let mut out = repair_stable_block(instance, opts);
    if opts.show_prefix {
        out.push_str(&format!("You have already executed {} verified moves.\n", view.prefix_len));
        out.push_str(&format!("Recent verified moves: [{}]\n", view.prefix_tail.join(", ")));
    }
    out.push_str(&format!("Current verified state: {}\n", view.boundary_state_text));
    out.push_str(&format!("Legal moves: {}\n", view.legal_actions_text));
    out.push_str(&format!("Blocked: {}\n", view.blocked_text));
    out.push_str(&format!("Verifier message: {}\n", view.error_text));
    out
}
