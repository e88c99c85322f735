use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use super::ProgramExecutor;
use crate::env::{self, split_top_level, Action, EnvId, ParseError, Plan};
use crate::zoo::PromptMode;

static CODE_BLOCK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)```[A-Za-z0-9_+.-]*[^\n]*\n(.*?)```").expect("valid regex"));
static MOVES_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^[ \t]*moves[ \t]*=[ \t]*\[(.*)\][ \t]*$").expect("valid regex"));

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractionError {
    #[error("no plan")]
    NoPlan,
    #[error("program timed out")]
    Timeout,
    /// `tokens` holds every element of the moves line, so callers can still
    /// replay up to the bad one.
    #[error("element {index} ('{token}') is not an action: {error}")]
    BadElement { index: usize, token: String, error: ParseError, tokens: Vec<String> },
}

/// Body of the first fenced code block.
pub fn find_code_block(text: &str) -> Option<&str> {
    CODE_BLOCK.captures(text).and_then(|c| c.get(1)).map(|m| m.as_str())
}

/// Elements of the last `moves = [...]` line, with surrounding quotes
/// removed (a Python list of strings prints that way).
pub fn last_moves_line(text: &str) -> Option<Vec<String>> {
    let caps = MOVES_LINE.captures_iter(text).last()?;
    let inner = caps.get(1).map_or("", |m| m.as_str());
    Some(
        split_top_level(inner)
            .into_iter()
            .map(|t| unquote(t.trim()).to_string())
            .filter(|t| !t.is_empty())
            .collect(),
    )
}

fn unquote(t: &str) -> &str {
    for q in ['\'', '"'] {
        if t.len() >= 2 && t.starts_with(q) && t.ends_with(q) {
            return &t[1..t.len() - 1];
        }
    }
    t
}

/// Raw action tokens of a completion, before parsing.
pub fn extract_tokens(
    completion: &str,
    mode: PromptMode,
    executor: &dyn ProgramExecutor,
) -> Result<Vec<String>, ExtractionError> {
    let source = match (mode, find_code_block(completion)) {
        (PromptMode::Pot, Some(code)) => {
            let run = executor.execute(code);
            if run.timed_out {
                return Err(ExtractionError::Timeout);
            }
            run.stdout
        }
        _ => completion.to_string(),
    };
    last_moves_line(&source).ok_or(ExtractionError::NoPlan)
}

/// Extracts and parses a plan from a completion.
pub fn extract_plan(
    env: EnvId,
    completion: &str,
    mode: PromptMode,
    executor: &dyn ProgramExecutor,
) -> Result<Plan, ExtractionError> {
    let tokens = extract_tokens(completion, mode, executor)?;
    let mut plan: Vec<Action> = Vec::with_capacity(tokens.len());
    for (index, token) in tokens.iter().enumerate() {
        match env::parse_action(env, token) {
            Ok(a) => plan.push(a),
            Err(error) => {
                return Err(ExtractionError::BadElement { index, token: token.clone(), error, tokens });
            }
        }
    }
    Ok(plan)
}
