#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use repot_core::env::{self, Action, BlockOp, BlocksState, EnvId, EnvState, Fact, GoalSpec, HanoiState, Layout, Support};
use repot_core::replay;
use repot_core::gateway::{ProgramExecutor, SandboxResult, TokenSource};
use repot_core::runner::{LlmCall, TraceRecord};
use repot_core::oracle;
use repot_core::zoo::{generate_suite, ProblemInstance, StratificationPlan, Stratum};

/// Executor for completions that never contain code blocks.
pub struct NoCode;

impl ProgramExecutor for NoCode {
    fn execute(&self, _: &str) -> SandboxResult {
        panic!("test completions carry no code blocks");
    }
}

pub fn hanoi(n: u32, id: &str) -> ProblemInstance {
    let start = EnvState::Hanoi(HanoiState::tower(n, 0));
    let goal = GoalSpec::State(EnvState::Hanoi(HanoiState::tower(n, 2)));
    let plan = oracle::solve(&start, &goal).unwrap();
    ProblemInstance::new(id.to_string(), start, goal, plan, 0)
}

pub fn moves(plan: &[Action]) -> String {
    format!("moves = {}", env::plan_text(plan))
}

/// Oracle plan with action `j` (0-based) replaced by one that is invalid at
/// that point.
pub fn corrupt(inst: &ProblemInstance, j: usize) -> Vec<Action> {
    let mut state = inst.initial_state.clone();
    for a in &inst.oracle_plan[..j] {
        state = env::step(&state, a).unwrap().next_state;
    }
    let legal = env::legal_actions(&state);
    let bad = env::action_universe(&state).into_iter().find(|a| !legal.contains(a)).expect("some illegal action");
    let mut plan = inst.oracle_plan.clone();
    plan[j] = bad;
    plan
}

pub const GARBAGE: &str = "I am not sure how to solve this puzzle.";

pub fn small_suite(seed: u64) -> Vec<ProblemInstance> {
    let plan = StratificationPlan {
        strata: vec![
            Stratum { environment: EnvId::Hanoi, complexities: vec![3, 4], per_complexity: 3 },
            Stratum { environment: EnvId::Checker, complexities: vec![2, 3], per_complexity: 2 },
            Stratum { environment: EnvId::River, complexities: vec![3], per_complexity: 3 },
            Stratum { environment: EnvId::Blocksworld, complexities: vec![4, 5], per_complexity: 3 },
        ],
    };
    generate_suite(&plan, seed).unwrap()
}

/// Bare trace record for analysis fixtures.
pub fn trace(problem_id: &str, method: &str, success: bool) -> TraceRecord {
    TraceRecord {
        problem_id: problem_id.into(),
        method: method.into(),
        model: "scripted".into(),
        environment: EnvId::Hanoi,
        complexity: 3,
        success,
        llm_calls: Vec::new(),
        repot_repair_calls: None,
        repot_initial_pot_success: None,
        verified_prefix_len: 0,
        plan_len: 0,
        first_failure_index: None,
        verifier_error: None,
        runner_exception: None,
        wall_ms: 0,
        seed: 0,
        route_taken: None,
        attempt1_success: None,
        attempt1_prefix_len: None,
        attempt1_plan_len: None,
        final_plan: Vec::new(),
    }
}

pub fn call(tokens_in: u64, tokens_out: u64) -> LlmCall {
    LlmCall {
        prompt: String::new(),
        output_text: String::new(),
        prompt_tokens: tokens_in,
        completion_tokens: tokens_out,
        latency_ms: 1,
        token_source: TokenSource::Proxy,
    }
}

/// 100 repot and 100 pot_retry records with
/// (p, q, r, b, b') = (0.6, 0.2, 0.7, 0.3, 0.2) exactly.
pub fn planted_recovery() -> (Vec<TraceRecord>, Vec<TraceRecord>) {
    let mut repot = Vec::new();
    let mut retry = Vec::new();
    for i in 0..100 {
        let id = format!("p{i:03}");
        // 0..60 initial success, 60..80 failed with a prefix, 80..100 empty.
        let (initial_ok, prefix) = match i {
            0..60 => (true, 6),
            60..80 => (false, 2),
            _ => (false, 0),
        };
        let mut r = trace(&id, "repot", initial_ok || (60..74).contains(&i) || (80..83).contains(&i));
        r.repot_initial_pot_success = Some(initial_ok);
        r.attempt1_prefix_len = Some(prefix);
        r.attempt1_plan_len = Some(6);
        repot.push(r);

        let mut t = trace(&id, "pot_retry", initial_ok || (60..68).contains(&i) || (80..84).contains(&i));
        t.attempt1_success = Some(initial_ok);
        t.attempt1_prefix_len = Some(prefix);
        t.attempt1_plan_len = Some(6);
        retry.push(t);
    }
    (repot, retry)
}

/// State reached by `len` uniformly random legal moves from the instance's
/// initial state.
pub fn random_walk(inst: &ProblemInstance, rng: &mut impl Rng, len: usize) -> EnvState {
    let mut state = inst.initial_state.clone();
    for _ in 0..len {
        let legal = env::legal_actions(&state);
        let Some(a) = legal.choose(rng) else { break };
        state = env::step(&state, a).unwrap().next_state;
    }
    state
}

/// Random Blocksworld state over `n` blocks; sometimes a block is held.
pub fn random_blocks(rng: &mut impl Rng, n: usize) -> BlocksState {
    let mut names = repot_core::zoo::block_names(n);
    names.shuffle(rng);
    let mut layout = Layout::default();
    let mut tops: Vec<String> = Vec::new();
    let held = if rng.gen_bool(0.3) { names.pop() } else { None };
    for b in names {
        if tops.is_empty() || rng.gen_bool(0.4) {
            layout.support.insert(b.clone(), Support::Table);
            tops.push(b);
        } else {
            let i = rng.gen_range(0..tops.len());
            layout.support.insert(b.clone(), Support::On(tops[i].clone()));
            tops[i] = b;
        }
    }
    if let Some(h) = held {
        layout.support.insert(h, Support::Held);
    }
    BlocksState::from_layout(&layout)
}

/// Textbook STRIPS blocksworld: preconditions, delete list, add list.
pub fn strips_apply(state: &BTreeSet<Fact>, op: &BlockOp) -> Option<BTreeSet<Fact>> {
    use Fact::*;
    let s = |x: &str| x.to_string();
    let (pre, del, add): (Vec<Fact>, Vec<Fact>, Vec<Fact>) = match op {
        BlockOp::PickUp(x) => (
            vec![Clear(s(x)), OnTable(s(x)), ArmEmpty],
            vec![Clear(s(x)), OnTable(s(x)), ArmEmpty],
            vec![Holding(s(x))],
        ),
        BlockOp::PutDown(x) => (vec![Holding(s(x))], vec![Holding(s(x))], vec![Clear(s(x)), OnTable(s(x)), ArmEmpty]),
        BlockOp::Stack(x, y) => (
            vec![Holding(s(x)), Clear(s(y))],
            vec![Holding(s(x)), Clear(s(y))],
            vec![ArmEmpty, On(s(x), s(y)), Clear(s(x))],
        ),
        BlockOp::Unstack(x, y) => (
            vec![On(s(x), s(y)), Clear(s(x)), ArmEmpty],
            vec![On(s(x), s(y)), Clear(s(x)), ArmEmpty],
            vec![Holding(s(x)), Clear(s(y))],
        ),
    };
    if !pre.iter().all(|f| state.contains(f)) {
        return None;
    }
    let mut next = state.clone();
    for f in &del {
        next.remove(f);
    }
    next.extend(add);
    Some(next)
}

/// Checks maximality, no mutation on the invalid step, and that the
/// boundary state is the prefix's endpoint. Returns a description of the
/// first violation.
pub fn replay_violation(inst: &ProblemInstance, start: &EnvState, plan: &[Action]) -> Option<String> {
    let out = replay::replay(inst.environment, start, plan, &inst.goal).ok()?;
    if out.plan_len != plan.len() || out.failure_index != out.prefix.len() + 1 || out.prefix[..] != plan[..out.prefix.len()] {
        return Some(format!("inconsistent outcome {out:?}"));
    }
    let mut s = start.clone();
    for a in &out.prefix {
        let r = env::step(&s, a).unwrap();
        if !r.valid {
            return Some(format!("prefix contains invalid {a}"));
        }
        s = r.next_state;
    }
    if s != out.boundary_state {
        return Some("boundary is not the prefix endpoint".into());
    }
    if out.failure_index <= plan.len() {
        let r = env::step(&s, &plan[out.failure_index - 1]).unwrap();
        if r.valid || r.next_state != s || out.error.is_empty() {
            return Some(format!("transition {} should be rejected without change", out.failure_index));
        }
    } else if !out.error.is_empty() {
        return Some("fully valid plan carries an error".into());
    }
    if out.goal_reached != env::is_goal(&s, &inst.goal).unwrap() {
        return Some("goal flag disagrees with the boundary state".into());
    }
    // Composition: replaying the rest from the boundary continues the walk.
    let k = out.prefix.len();
    let split = k / 2;
    let head = replay::replay(inst.environment, start, &plan[..split], &inst.goal).unwrap();
    let tail = replay::replay(inst.environment, &head.boundary_state, &plan[split..], &inst.goal).unwrap();
    if head.prefix.len() != split || split + tail.prefix.len() != k || tail.boundary_state != out.boundary_state {
        return Some(format!("composition fails at split {split}"));
    }
    None
}
