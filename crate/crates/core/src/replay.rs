//! Verified replay: walk a candidate plan to its first invalid transition.
//!
//! Replay depends only on [`crate::env`]; it never talks to a model.

use crate::env::{self, Action, EnvError, EnvId, EnvState, GoalSpec, ParseError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayOutcome {
    /// Maximal verified prefix `a_1 .. a_{k-1}`.
    pub prefix: Vec<Action>,
    /// State reached after the prefix.
    pub boundary_state: EnvState,
    /// 1-based index `k` of the first invalid transition; `n + 1` when every
    /// action is valid.
    pub failure_index: usize,
    /// Verifier message for transition `k`; empty iff the plan is fully valid.
    pub error: String,
    pub goal_reached: bool,
    /// Number of proposed actions `n`.
    pub plan_len: usize,
}

impl ReplayOutcome {
    pub fn fully_valid(&self) -> bool {
        self.failure_index == self.plan_len + 1
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix.len()
    }
}

fn walk<I>(env: EnvId, start: &EnvState, steps: I, goal: &GoalSpec) -> Result<ReplayOutcome, EnvError>
where
    I: ExactSizeIterator<Item = Result<Action, String>>,
{
    if start.env() != env {
        return Err(EnvError::Mismatch { expected: env, found: start.env() });
    }
    let plan_len = steps.len();
    let mut state = start.clone();
    let mut prefix = Vec::new();
    let mut error = String::new();
    for item in steps {
        let action = match item {
            Ok(a) => a,
            Err(msg) => {
                error = msg;
                break;
            }
        };
        if action.env() != env {
            error = format!("action {action} belongs to {}, not {env}", action.env());
            break;
        }
        let r = env::step(&state, &action)?;
        if !r.valid {
            error = r.error;
            break;
        }
        state = r.next_state;
        prefix.push(action);
    }
    let goal_reached = env::is_goal(&state, goal)?;
    Ok(ReplayOutcome {
        failure_index: prefix.len() + 1,
        prefix,
        boundary_state: state,
        error,
        goal_reached,
        plan_len,
    })
}

/// Replays a parsed plan from `start`.
pub fn replay(env: EnvId, start: &EnvState, plan: &[Action], goal: &GoalSpec) -> Result<ReplayOutcome, EnvError> {
    walk(env, start, plan.iter().cloned().map(Ok), goal)
}

/// Replays raw action tokens; a token that fails to parse is treated as the
/// first invalid transition, with the parse message as the verifier error.
pub fn replay_tokens(
    env: EnvId,
    start: &EnvState,
    tokens: &[String],
    goal: &GoalSpec,
) -> Result<ReplayOutcome, EnvError> {
    let steps = tokens.iter().map(|t| {
        env::parse_action(env, t).map_err(|e: ParseError| format!("could not parse action '{t}': {e}"))
    });
    walk(env, start, steps, goal)
}
