//! Reference solvers and the greedy triviality probe.
//!
//! Hanoi, Checker and River are solved by breadth-first search with actions
//! expanded in canonical order, so plans are shortest and reproducible.
//! Blocksworld uses a tower-dismantle-then-rebuild strategy: valid and linear
//! in the number of blocks, but not length-optimal.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::env::blocks::{BlockOp, Layout, Support};
use crate::env::checker::{Cell, CheckerMove};
use crate::env::{self, Action, BlocksState, CheckerState, EnvState, Fact, GoalSpec};
use crate::replay;

/// Visited-state ceiling for breadth-first search.
pub const BFS_STATE_CAP: usize = 5_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("instance is unsolvable")]
    Unsolvable,
    #[error("search budget exceeded after {visited} states")]
    BudgetExceeded { visited: usize },
    #[error(transparent)]
    Env(#[from] env::EnvError),
}

/// Finds a plan from `start` to `goal`.
pub fn solve(start: &EnvState, goal: &GoalSpec) -> Result<Vec<Action>, SolveError> {
    start.check()?;
    let plan = match (start, goal) {
        (EnvState::Blocks(s), GoalSpec::Facts(facts)) => match solve_blocks(s, facts) {
            Some(plan) => plan,
            None => bfs(start, goal, BFS_STATE_CAP)?,
        },
        (EnvState::Checker(s), GoalSpec::State(EnvState::Checker(g))) => bfs_checker(s, g, BFS_STATE_CAP)?,
        _ => bfs(start, goal, BFS_STATE_CAP)?,
    };
    let out = replay::replay(start.env(), start, &plan, goal)?;
    if !out.fully_valid() || !out.goal_reached {
        return Err(SolveError::Unsolvable);
    }
    Ok(plan)
}

/// Breadth-first search with canonical action ordering.
pub fn bfs(start: &EnvState, goal: &GoalSpec, cap: usize) -> Result<Vec<Action>, SolveError> {
    let start = env::normalize(start);
    if env::is_goal(&start, goal)? {
        return Ok(Vec::new());
    }
    // Arena of (state, parent index, action from parent).
    let mut arena: Vec<(EnvState, usize, Option<Action>)> = vec![(start.clone(), 0, None)];
    let mut index: HashMap<EnvState, usize> = HashMap::new();
    index.insert(start, 0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let state = arena[i].0.clone();
        for action in env::legal_actions(&state) {
            let r = env::step(&state, &action)?;
            let next = env::normalize(&r.next_state);
            if index.contains_key(&next) {
                continue;
            }
            let reached = env::is_goal(&next, goal)?;
            let id = arena.len();
            index.insert(next.clone(), id);
            arena.push((next, i, Some(action)));
            if reached {
                let mut plan = Vec::new();
                let mut cur = id;
                while let Some(a) = arena[cur].2.clone() {
                    plan.push(a);
                    cur = arena[cur].1;
                }
                plan.reverse();
                return Ok(plan);
            }
            if arena.len() > cap {
                return Err(SolveError::BudgetExceeded { visited: arena.len() });
            }
            queue.push_back(id);
        }
    }
    Err(SolveError::Unsolvable)
}

fn checker_key(cells: &[Cell]) -> u64 {
    cells.iter().fold(0u64, |acc, c| {
        (acc << 2)
            | match c {
                Cell::Empty => 0,
                Cell::LeftToken => 1,
                Cell::RightToken => 2,
            }
    })
}

fn checker_cells(mut key: u64, len: usize) -> Vec<Cell> {
    let mut cells = vec![Cell::Empty; len];
    for i in (0..len).rev() {
        cells[i] = match key & 3 {
            1 => Cell::LeftToken,
            2 => Cell::RightToken,
            _ => Cell::Empty,
        };
        key >>= 2;
    }
    cells
}

/// Breadth-first search over Checker boards packed into `u64` keys, for
/// boards too large to store as full states. Same expansion order as [`bfs`].
pub fn bfs_checker(start: &CheckerState, goal: &CheckerState, cap: usize) -> Result<Vec<Action>, SolveError> {
    let len = start.cells.len();
    if len > 32 {
        return bfs(&EnvState::Checker(start.clone()), &GoalSpec::State(EnvState::Checker(goal.clone())), cap);
    }
    let start_key = checker_key(&start.cells);
    let goal_key = checker_key(&goal.cells);
    if start_key == goal_key {
        return Ok(Vec::new());
    }
    // key -> (parent key, move)
    let mut parents: HashMap<u64, (u64, CheckerMove)> = HashMap::new();
    let mut queue = VecDeque::from([start_key]);
    let mut visited = 1usize;
    while let Some(key) = queue.pop_front() {
        let state = CheckerState { cells: checker_cells(key, len) };
        let mut moves = env::checker::legal(&state);
        moves.sort_by_cached_key(|m| m.to_string());
        for mv in moves {
            let Ok(next) = env::checker::step(&state, &mv) else { continue };
            let next_key = checker_key(&next.cells);
            if next_key == start_key || parents.contains_key(&next_key) {
                continue;
            }
            parents.insert(next_key, (key, mv));
            visited += 1;
            if next_key == goal_key {
                let mut plan = Vec::new();
                let mut cur = next_key;
                while cur != start_key {
                    let (parent, mv) = parents[&cur];
                    plan.push(Action::Checker(mv));
                    cur = parent;
                }
                plan.reverse();
                return Ok(plan);
            }
            if visited > cap {
                return Err(SolveError::BudgetExceeded { visited });
            }
            queue.push_back(next_key);
        }
    }
    Err(SolveError::Unsolvable)
}

fn goal_support(facts: &[Fact]) -> HashMap<&str, Support> {
    let mut out = HashMap::new();
    for f in facts {
        match f {
            Fact::On(x, y) => {
                out.insert(x.as_str(), Support::On(y.clone()));
            }
            Fact::OnTable(x) => {
                out.insert(x.as_str(), Support::Table);
            }
            _ => {}
        }
    }
    out
}

/// Blocks with no goal position are parked on the table.
fn well_placed(layout: &Layout, target: &HashMap<&str, Support>, block: &str) -> bool {
    let mut cur = block.to_string();
    loop {
        let here = &layout.support[&cur];
        let want = target.get(cur.as_str()).cloned().unwrap_or(Support::Table);
        if *here != want {
            return false;
        }
        match here {
            Support::On(y) => cur = y.clone(),
            _ => return true,
        }
    }
}

fn apply(layout: &mut Layout, plan: &mut Vec<Action>, op: BlockOp) -> Option<()> {
    *layout = env::blocks::step_layout(layout, &op).ok()?;
    plan.push(Action::Blocks(op));
    Some(())
}

/// Dismantle every misplaced block to the table, then build goal towers
/// bottom-up. Returns `None` if the goal needs more than on/on_table facts.
pub fn solve_blocks(state: &BlocksState, goal: &[Fact]) -> Option<Vec<Action>> {
    let mut layout = state.layout().ok()?;
    let target = goal_support(goal);
    if target.keys().any(|b| !layout.support.contains_key(*b)) {
        return None;
    }
    let mut plan = Vec::new();
    if let Some(h) = layout.holding().map(str::to_string) {
        apply(&mut layout, &mut plan, BlockOp::PutDown(h))?;
    }
    loop {
        let next = layout.support.iter().find_map(|(x, s)| match s {
            Support::On(y) if layout.is_clear(x) && !well_placed(&layout, &target, x) => Some((x.clone(), y.clone())),
            _ => None,
        });
        let Some((x, y)) = next else { break };
        apply(&mut layout, &mut plan, BlockOp::Unstack(x.clone(), y))?;
        apply(&mut layout, &mut plan, BlockOp::PutDown(x))?;
    }
    loop {
        let next = layout.support.keys().find_map(|x| match target.get(x.as_str()) {
            Some(Support::On(y))
                if layout.support[x] == Support::Table
                    && layout.is_clear(x)
                    && layout.is_clear(y)
                    && well_placed(&layout, &target, y) =>
            {
                Some((x.clone(), y.clone()))
            }
            _ => None,
        });
        let Some((x, y)) = next else { break };
        apply(&mut layout, &mut plan, BlockOp::PickUp(x.clone()))?;
        apply(&mut layout, &mut plan, BlockOp::Stack(x, y))?;
    }
    let done = BlocksState::from_layout(&layout);
    goal.iter().all(|f| done.facts.contains(f)).then_some(plan)
}

/// Hand-coded distance-to-goal estimate used by the greedy probe.
pub fn heuristic(state: &EnvState, goal: &GoalSpec) -> usize {
    match (state, goal) {
        (EnvState::Hanoi(s), GoalSpec::State(EnvState::Hanoi(g))) => env::hanoi::misplaced(s, g),
        (EnvState::Checker(s), GoalSpec::State(EnvState::Checker(g))) => env::checker::mismatched(s, g),
        (EnvState::River(s), GoalSpec::State(EnvState::River(g))) => env::river::misplaced(s, g),
        (EnvState::Blocks(s), GoalSpec::Facts(f)) => env::blocks::unsatisfied(s, f),
        (EnvState::Blocks(s), GoalSpec::State(EnvState::Blocks(g))) => env::blocks::unsatisfied(s, &g.facts),
        _ => usize::MAX,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeResult {
    Solved,
    NotSolved,
}

/// Runs a memoryless greedy policy for at most `budget` steps: always take
/// the legal action whose successor has the lowest heuristic value, ties
/// broken by canonical action order.
pub fn greedy_probe(start: &EnvState, goal: &GoalSpec, budget: usize) -> ProbeResult {
    let mut state = start.clone();
    for _ in 0..budget {
        if env::is_goal(&state, goal).unwrap_or(false) {
            return ProbeResult::Solved;
        }
        let mut best: Option<(usize, EnvState)> = None;
        for action in env::legal_actions(&state) {
            let Ok(r) = env::step(&state, &action) else { continue };
            let h = heuristic(&r.next_state, goal);
            if best.as_ref().is_none_or(|(bh, _)| h < *bh) {
                best = Some((h, r.next_state));
            }
        }
        match best {
            Some((_, next)) => state = next,
            None => return ProbeResult::NotSolved,
        }
    }
    if env::is_goal(&state, goal).unwrap_or(false) {
        ProbeResult::Solved
    } else {
        ProbeResult::NotSolved
    }
}
