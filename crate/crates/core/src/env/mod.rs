//! Deterministic planning environments behind one interface.
//!
//! Four environments share the same surface: [`step`], [`is_goal`],
//! [`legal_actions`], [`normalize`], [`parse_action`] and [`render_state`].
//! Each environment's rules live in their own submodule so a rule variant
//! can be swapped in one file.
//!
//! Canonical action grammar (lowercase, no spaces):
//!
//! | environment | actions |
//! |---|---|
//! | hanoi | `move(disk,from_peg,to_peg)` |
//! | checker | `slide(from,to)`, `jump(from,over,to)` |
//! | river | `cross(left\|right,[entity,...])` with 1–2 entities |
//! | blocksworld | `pick-up(x)`, `put-down(x)`, `stack(x,y)`, `unstack(x,y)` |
//!
//! The parser also accepts upper/mixed-case operator names and arbitrary
//! whitespace between tokens. Anything else is a [`ParseError`].

pub mod blocks;
pub mod checker;
pub mod grammar;
pub mod hanoi;
pub mod river;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use blocks::{BlockOp, BlocksState, Fact, Layout, Support};
pub use checker::{CheckerMove, CheckerState};
pub use grammar::{split_top_level, ParseError};
pub use hanoi::{HanoiMove, HanoiState};
pub use river::{Crossing, RiverState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    Hanoi,
    Checker,
    River,
    Blocksworld,
}

impl EnvId {
    pub const ALL: [EnvId; 4] = [EnvId::Hanoi, EnvId::Checker, EnvId::River, EnvId::Blocksworld];

    pub fn name(self) -> &'static str {
        match self {
            EnvId::Hanoi => "hanoi",
            EnvId::Checker => "checker",
            EnvId::River => "river",
            EnvId::Blocksworld => "blocksworld",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EnvId::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown environment '{s}' (expected hanoi, checker, river or blocksworld)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EnvState {
    Hanoi(HanoiState),
    Checker(CheckerState),
    River(RiverState),
    Blocks(BlocksState),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Hanoi(HanoiMove),
    Checker(CheckerMove),
    River(Crossing),
    Blocks(BlockOp),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Hanoi(a) => a.fmt(f),
            Action::Checker(a) => a.fmt(f),
            Action::River(a) => a.fmt(f),
            Action::Blocks(a) => a.fmt(f),
        }
    }
}

impl Action {
    pub fn env(&self) -> EnvId {
        match self {
            Action::Hanoi(_) => EnvId::Hanoi,
            Action::Checker(_) => EnvId::Checker,
            Action::River(_) => EnvId::River,
            Action::Blocks(_) => EnvId::Blocksworld,
        }
    }

    /// Operator name of the canonical form (`move`, `jump`, `pick-up`, ...).
    pub fn op_name(&self) -> &'static str {
        match self {
            Action::Hanoi(_) => "move",
            Action::Checker(CheckerMove::Slide { .. }) => "slide",
            Action::Checker(CheckerMove::Jump { .. }) => "jump",
            Action::River(_) => "cross",
            Action::Blocks(BlockOp::PickUp(_)) => "pick-up",
            Action::Blocks(BlockOp::PutDown(_)) => "put-down",
            Action::Blocks(BlockOp::Stack(..)) => "stack",
            Action::Blocks(BlockOp::Unstack(..)) => "unstack",
        }
    }
}

/// A plan is an ordered list of primitive actions.
pub type Plan = Vec<Action>;

/// Renders a plan in the `[a, b, c]` list form used in prompts and traces.
pub fn plan_text(plan: &[Action]) -> String {
    let items: Vec<String> = plan.iter().map(|a| a.to_string()).collect();
    format!("[{}]", items.join(", "))
}

/// Target of a problem. Blocksworld goals are partial predicate sets checked
/// by subset; every other environment is matched by exact normalized state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GoalSpec {
    State(EnvState),
    Facts(Vec<Fact>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepResult {
    pub next_state: EnvState,
    pub valid: bool,
    /// One-line message naming the violated rule; empty iff `valid`.
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("environment mismatch: expected {expected}, got {found}")]
    Mismatch { expected: EnvId, found: EnvId },
    #[error("invalid {env} state: {message}")]
    InvalidState { env: EnvId, message: String },
}

impl EnvState {
    pub fn env(&self) -> EnvId {
        match self {
            EnvState::Hanoi(_) => EnvId::Hanoi,
            EnvState::Checker(_) => EnvId::Checker,
            EnvState::River(_) => EnvId::River,
            EnvState::Blocks(_) => EnvId::Blocksworld,
        }
    }

    /// Complexity parameter: disks, checkers per side, pairs, or blocks.
    pub fn complexity(&self) -> usize {
        match self {
            EnvState::Hanoi(s) => s.disk_count() as usize,
            EnvState::Checker(s) => s.per_side(),
            EnvState::River(s) => s.pairs() as usize,
            EnvState::Blocks(s) => s.block_names().len(),
        }
    }

    pub fn check(&self) -> Result<(), EnvError> {
        let r = match self {
            EnvState::Hanoi(s) => s.check(),
            EnvState::Checker(s) => s.check(),
            EnvState::River(s) => s.check(),
            EnvState::Blocks(s) => s.check(),
        };
        r.map_err(|message| EnvError::InvalidState { env: self.env(), message })
    }

    /// Canonical, parseable text form used in suite and trace files.
    pub fn encode(&self) -> String {
        match self {
            EnvState::Hanoi(s) => hanoi::encode(s),
            EnvState::Checker(s) => checker::encode(s),
            EnvState::River(s) => river::encode(s),
            EnvState::Blocks(s) => blocks::encode(s),
        }
    }

    pub fn decode(env: EnvId, text: &str) -> Result<EnvState, EnvError> {
        let r = match env {
            EnvId::Hanoi => hanoi::decode(text).map(EnvState::Hanoi),
            EnvId::Checker => checker::decode(text).map(EnvState::Checker),
            EnvId::River => river::decode(text).map(EnvState::River),
            EnvId::Blocksworld => blocks::decode(text).map(EnvState::Blocks),
        };
        r.map_err(|message| EnvError::InvalidState { env, message })
    }
}

impl GoalSpec {
    pub fn env(&self) -> Option<EnvId> {
        match self {
            GoalSpec::State(s) => Some(s.env()),
            GoalSpec::Facts(_) => Some(EnvId::Blocksworld),
        }
    }

    pub fn encode(&self) -> String {
        match self {
            GoalSpec::State(s) => s.encode(),
            GoalSpec::Facts(f) => {
                let mut f = f.clone();
                f.sort();
                f.dedup();
                blocks::facts_text(&f)
            }
        }
    }

    pub fn decode(env: EnvId, text: &str) -> Result<GoalSpec, EnvError> {
        match env {
            EnvId::Blocksworld => blocks::parse_facts(text)
                .map(GoalSpec::Facts)
                .map_err(|message| EnvError::InvalidState { env, message }),
            _ => EnvState::decode(env, text).map(GoalSpec::State),
        }
    }

    /// Human-readable goal description for prompts.
    pub fn render(&self) -> String {
        match self {
            GoalSpec::State(s) => render_state(s),
            GoalSpec::Facts(_) => format!("all of {}", self.encode()),
        }
    }
}

fn mismatch(expected: EnvId, found: EnvId) -> EnvError {
    EnvError::Mismatch { expected, found }
}

/// Applies one action. Invalid moves are an ordinary result with the input
/// state unchanged; only a state/action environment mismatch is an error.
pub fn step(state: &EnvState, action: &Action) -> Result<StepResult, EnvError> {
    let outcome = match (state, action) {
        (EnvState::Hanoi(s), Action::Hanoi(a)) => hanoi::step(s, a).map(EnvState::Hanoi),
        (EnvState::Checker(s), Action::Checker(a)) => checker::step(s, a).map(EnvState::Checker),
        (EnvState::River(s), Action::River(a)) => river::step(s, a).map(EnvState::River),
        (EnvState::Blocks(s), Action::Blocks(a)) => blocks::step(s, a).map(EnvState::Blocks),
        _ => return Err(mismatch(state.env(), action.env())),
    };
    Ok(match outcome {
        Ok(next_state) => StepResult { next_state, valid: true, error: String::new() },
        Err(error) => StepResult { next_state: state.clone(), valid: false, error },
    })
}

pub fn is_goal(state: &EnvState, goal: &GoalSpec) -> Result<bool, EnvError> {
    match (state, goal) {
        (EnvState::Blocks(s), GoalSpec::Facts(facts)) => {
            let s = s.normalized();
            Ok(facts.iter().all(|f| s.facts.binary_search(f).is_ok()))
        }
        (_, GoalSpec::State(g)) => {
            if g.env() != state.env() {
                return Err(mismatch(g.env(), state.env()));
            }
            Ok(normalize(state) == normalize(g))
        }
        (_, GoalSpec::Facts(_)) => Err(mismatch(EnvId::Blocksworld, state.env())),
    }
}

fn sorted_by_text(mut actions: Vec<Action>) -> Vec<Action> {
    actions.sort_by_cached_key(|a| a.to_string());
    actions
}

/// Every action that steps validly from `state`, ordered by canonical text.
pub fn legal_actions(state: &EnvState) -> Vec<Action> {
    let actions: Vec<Action> = match state {
        EnvState::Hanoi(s) => hanoi::legal(s).into_iter().map(Action::Hanoi).collect(),
        EnvState::Checker(s) => checker::legal(s).into_iter().map(Action::Checker).collect(),
        EnvState::River(s) => river::legal(s).into_iter().map(Action::River).collect(),
        EnvState::Blocks(s) => blocks::legal(s).into_iter().map(Action::Blocks).collect(),
    };
    sorted_by_text(actions)
}

/// Every syntactically well-formed action over the entities of `state`,
/// legal or not, ordered by canonical text.
pub fn action_universe(state: &EnvState) -> Vec<Action> {
    let actions: Vec<Action> = match state {
        EnvState::Hanoi(s) => hanoi::universe(s).into_iter().map(Action::Hanoi).collect(),
        EnvState::Checker(s) => checker::universe(s).into_iter().map(Action::Checker).collect(),
        EnvState::River(s) => river::universe(s).into_iter().map(Action::River).collect(),
        EnvState::Blocks(s) => blocks::universe(s).into_iter().map(Action::Blocks).collect(),
    };
    sorted_by_text(actions)
}

pub fn normalize(state: &EnvState) -> EnvState {
    match state {
        EnvState::River(s) => EnvState::River(s.normalized()),
        EnvState::Blocks(s) => EnvState::Blocks(s.normalized()),
        other => other.clone(),
    }
}

pub fn parse_action(env: EnvId, text: &str) -> Result<Action, ParseError> {
    let term = grammar::parse_term(text)?;
    match env {
        EnvId::Hanoi => hanoi::parse(&term).map(Action::Hanoi),
        EnvId::Checker => checker::parse(&term).map(Action::Checker),
        EnvId::River => river::parse(&term).map(Action::River),
        EnvId::Blocksworld => blocks::parse(&term).map(Action::Blocks),
    }
}

/// Deterministic human-readable description of a state. One-way: use
/// [`EnvState::encode`] for a parseable form.
pub fn render_state(state: &EnvState) -> String {
    match state {
        EnvState::Hanoi(s) => hanoi::render(s),
        EnvState::Checker(s) => checker::render(s),
        EnvState::River(s) => river::render(s),
        EnvState::Blocks(s) => blocks::render(&s.normalized()),
    }
}

/// Plain-language rules shown to the model.
pub fn rules_text(env: EnvId) -> &'static str {
    match env {
        EnvId::Hanoi => {
            "Tower of Hanoi with pegs 0, 1 and 2. Disks are numbered from 1 (smallest). \
Pegs are listed bottom to top. Move one disk at a time, only the top disk of a peg may move, \
and a disk may never be placed on a smaller disk. Action: move(disk,from_peg,to_peg)."
        }
        EnvId::Checker => {
            "Checker Jumping on a row of cells numbered from 0. L tokens move only right, R tokens \
move only left. A token may slide one cell into the empty cell, or jump over exactly one \
opposing token into the empty cell directly behind it. Jumped tokens stay on the board. \
Actions: slide(from,to) and jump(from,over,to)."
        }
        EnvId::River => {
            "River Crossing with actor/agent pairs (actorN belongs with agentN). The boat holds one \
or two people and must carry at least one. An actor may never be on a bank or in the boat with \
another pair's agent unless the actor's own agent is also there. \
Action: cross(direction,[passengers]) where direction is left or right."
        }
        EnvId::Blocksworld => {
            "Blocksworld with a single robot arm. pick-up(x) takes a clear block from the table, \
put-down(x) places the held block on the table, unstack(x,y) takes clear block x off block y, \
and stack(x,y) places the held block x on clear block y. The arm holds at most one block. \
Towers are listed bottom to top."
        }
    }
}
