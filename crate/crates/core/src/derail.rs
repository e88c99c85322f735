//! Recovery benchmark: derail an oracle rollout with one wrong action and
//! measure how each recovery condition gets back to the goal.
//!
//! The injected action is drawn from the legal actions at the checkpoint,
//! excluding the oracle's own action, so the post-injection state is a real
//! (wrong) state. Conditions that show checkpoint information resume from the
//! checkpoint and treat the injected action as the rejected transition;
//! `no_feedback` and `error_only` resume from the post-injection state;
//! `repot_restart` resumes from the initial state.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::{IteratorRandom, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::env::{self, Action, EnvId, EnvState, Plan};
use crate::gateway::extract_plan;
use crate::runner::{build_repair_prompt, CheckpointView, RepairOptions, Runner, Session, TraceRecord, TraceSink};
use crate::seed;
use crate::zoo::{ProblemInstance, PromptMode};

#[derive(Debug, Error)]
pub enum DerailError {
    #[error("{problem_id}: oracle plan has {len} actions, at least 3 are needed")]
    ShortOracle { problem_id: String, len: usize },
    #[error("requested {requested} cases but only {available} could be made")]
    Target { requested: usize, available: usize },
    #[error("case {case_id} refers to unknown problem {problem_id}")]
    UnknownProblem { case_id: String, problem_id: String },
    #[error("condition {0} is listed twice")]
    DuplicateCondition(Condition),
    #[error("case file line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("trace sink write failed: {0}")]
    Sink(std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "CaseWire", try_from = "CaseWire")]
pub struct DerailCase {
    pub case_id: String,
    pub problem_id: String,
    pub checkpoint_index: usize,
    pub checkpoint_state: EnvState,
    pub injected_action: Action,
    pub post_injection_state: EnvState,
    pub injection_valid: bool,
    pub injection_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct CaseWire {
    case_id: String,
    problem_id: String,
    environment: EnvId,
    checkpoint_index: usize,
    checkpoint_state: String,
    injected_action: String,
    post_injection_state: String,
    injection_valid: bool,
    injection_seed: u64,
}

impl From<DerailCase> for CaseWire {
    fn from(c: DerailCase) -> Self {
        Self {
            environment: c.checkpoint_state.env(),
            checkpoint_state: c.checkpoint_state.encode(),
            post_injection_state: c.post_injection_state.encode(),
            injected_action: c.injected_action.to_string(),
            case_id: c.case_id,
            problem_id: c.problem_id,
            checkpoint_index: c.checkpoint_index,
            injection_valid: c.injection_valid,
            injection_seed: c.injection_seed,
        }
    }
}

impl TryFrom<CaseWire> for DerailCase {
    type Error = String;

    fn try_from(w: CaseWire) -> Result<Self, String> {
        let env = w.environment;
        Ok(Self {
            checkpoint_state: EnvState::decode(env, &w.checkpoint_state).map_err(|e| e.to_string())?,
            post_injection_state: EnvState::decode(env, &w.post_injection_state).map_err(|e| e.to_string())?,
            injected_action: env::parse_action(env, &w.injected_action).map_err(|e| e.to_string())?,
            case_id: w.case_id,
            problem_id: w.problem_id,
            checkpoint_index: w.checkpoint_index,
            injection_valid: w.injection_valid,
            injection_seed: w.injection_seed,
        })
    }
}

impl DerailCase {
    /// Shared by every condition of the case.
    pub fn pairing_key(&self) -> String {
        let text = format!(
            "{}|{}|{}|{}",
            self.problem_id, self.checkpoint_index, self.injected_action, self.injection_seed
        );
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// `floor(len / 3)`, at least 1.
pub fn checkpoint_index(oracle_len: usize) -> usize {
    (oracle_len / 3).max(1)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CaseSet {
    pub cases: Vec<DerailCase>,
    /// `(problem_id, reason)` for instances that yielded no case.
    pub skipped: Vec<(String, String)>,
}

/// Builds `per_problem` cases per instance; with `target`, keeps a seeded
/// subsample of exactly that many (in suite order).
pub fn make_cases(
    suite: &[ProblemInstance],
    per_problem: usize,
    run_seed: u64,
    target: Option<usize>,
) -> Result<CaseSet, DerailError> {
    let mut set = CaseSet::default();
    for inst in suite {
        let len = inst.oracle_plan.len();
        if len < 3 {
            return Err(DerailError::ShortOracle { problem_id: inst.problem_id.clone(), len });
        }
        let ci = checkpoint_index(len);
        let mut state = inst.initial_state.clone();
        for a in &inst.oracle_plan[..ci] {
            state = env::step(&state, a).expect("oracle actions match the environment").next_state;
        }
        let oracle_action = &inst.oracle_plan[ci];
        // A legal move that already satisfies the goal is not a wrong move;
        // the Blocksworld oracle is not length-optimal, so such shortcuts exist.
        let choices: Vec<Action> = env::legal_actions(&state)
            .into_iter()
            .filter(|a| a != oracle_action)
            .filter(|a| {
                let next = env::step(&state, a).expect("same environment").next_state;
                !env::is_goal(&next, &inst.goal).expect("same environment")
            })
            .collect();
        if choices.is_empty() {
            let reason = format!("no legal wrong action at checkpoint {ci}");
            tracing::warn!(problem_id = %inst.problem_id, %reason, "derail case skipped");
            set.skipped.push((inst.problem_id.clone(), reason));
            continue;
        }
        for slot in 0..per_problem {
            let injection_seed = seed::mix(&[run_seed, seed::hash_str(&inst.problem_id), slot as u64]);
            let injected = choices.choose(&mut seed::rng(injection_seed)).expect("non-empty").clone();
            let post = env::step(&state, &injected).expect("legal action");
            set.cases.push(DerailCase {
                case_id: format!("{}#{slot}", inst.problem_id),
                problem_id: inst.problem_id.clone(),
                checkpoint_index: ci,
                checkpoint_state: state.clone(),
                injected_action: injected,
                injection_valid: post.valid,
                post_injection_state: if post.valid { post.next_state } else { state.clone() },
                injection_seed,
            });
        }
    }
    if let Some(t) = target {
        if t > set.cases.len() {
            return Err(DerailError::Target { requested: t, available: set.cases.len() });
        }
        let mut rng = seed::rng(seed::mix(&[run_seed, seed::hash_str("derail-target")]));
        let mut keep = (0..set.cases.len()).choose_multiple(&mut rng, t);
        keep.sort_unstable();
        let mut all = std::mem::take(&mut set.cases).into_iter().map(Some).collect::<Vec<_>>();
        set.cases = keep.into_iter().map(|i| all[i].take().expect("indices are distinct")).collect();
    }
    Ok(set)
}

pub fn write_cases(cases: &[DerailCase], path: &Path) -> Result<(), DerailError> {
    let io = |e: std::io::Error| DerailError::Io { path: path.display().to_string(), message: e.to_string() };
    let mut out = BufWriter::new(fs::File::create(path).map_err(io)?);
    for c in cases {
        serde_json::to_writer(&mut out, c).map_err(|e| io(e.into()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_cases(path: &Path) -> Result<Vec<DerailCase>, DerailError> {
    let text = fs::read_to_string(path)
        .map_err(|e| DerailError::Io { path: path.display().to_string(), message: e.to_string() })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| DerailError::Malformed { line: i + 1, message: e.to_string() })
        })
        .collect()
}

/// Recovery conditions. New conditions are added as variants here and in
/// [`Condition::ALL`]; a run uses a fixed list chosen up front.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    NoFeedback,
    ErrorOnly,
    StateFeedback,
    StatePlusLegalActions,
    StateguardRollback,
    RepotFull,
    RepotNoPrefix,
    RepotRestart,
}

impl Condition {
    pub const ALL: [Condition; 8] = [
        Condition::NoFeedback,
        Condition::ErrorOnly,
        Condition::StateFeedback,
        Condition::StatePlusLegalActions,
        Condition::StateguardRollback,
        Condition::RepotFull,
        Condition::RepotNoPrefix,
        Condition::RepotRestart,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Condition::NoFeedback => "no_feedback",
            Condition::ErrorOnly => "error_only",
            Condition::StateFeedback => "state_feedback",
            Condition::StatePlusLegalActions => "state_plus_legal_actions",
            Condition::StateguardRollback => "stateguard_rollback",
            Condition::RepotFull => "repot_full",
            Condition::RepotNoPrefix => "repot_no_prefix",
            Condition::RepotRestart => "repot_restart",
        }
    }

    pub fn resume(self) -> Resume {
        match self {
            Condition::NoFeedback | Condition::ErrorOnly => Resume::PostInjection,
            Condition::RepotRestart => Resume::Initial,
            _ => Resume::Checkpoint,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Condition::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            let names: Vec<_> = Condition::ALL.iter().map(|c| c.name()).collect();
            format!("unknown condition '{s}' (valid: {})", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resume {
    PostInjection,
    Checkpoint,
    Initial,
}

/// A recovery trace: the usual record plus case and condition fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryRecord {
    #[serde(flatten)]
    pub trace: TraceRecord,
    pub case_id: String,
    pub condition: Condition,
    pub resume_from: Resume,
    pub checkpoint_index: usize,
    pub injected_action: String,
    pub injection_seed: u64,
    pub pairing_key: String,
}

/// One-line notice naming the injected action.
pub fn deviation_message(case: &DerailCase) -> String {
    format!("action {} deviated from a valid plan; it does not lead towards the goal", case.injected_action)
}

fn derail_prompt(inst: &ProblemInstance, body: &str, origin: &str, single: bool) -> String {
    let what = if single {
        "containing exactly one move: the next move to apply from the current state".to_string()
    } else {
        format!("containing the moves that take {origin} to the goal")
    };
    format!(
        "{}\nGoal state: {}\nA plan for this problem was being executed and went wrong part of the way through.\n\
         {body}Write Python code that prints exactly one line:\n  moves = [...]\n{what}.\n",
        inst.natural_language_prompt,
        inst.goal.render(),
    )
}

/// Prompt for a single-call condition.
pub fn condition_prompt(inst: &ProblemInstance, case: &DerailCase, condition: Condition, max_moves: usize) -> String {
    let post = env::render_state(&case.post_injection_state);
    let check = env::render_state(&case.checkpoint_state);
    let legal = env::plan_text(&env::legal_actions(&case.checkpoint_state));
    let injected = &case.injected_action;
    match condition {
        Condition::NoFeedback => derail_prompt(inst, &format!("Current state: {post}\n"), "the current state", false),
        Condition::ErrorOnly => derail_prompt(
            inst,
            &format!("Current state: {post}\nVerifier message: {}\n", deviation_message(case)),
            "the current state",
            false,
        ),
        Condition::StateFeedback => derail_prompt(
            inst,
            &format!("Last valid state: {check}\nAttempted wrong action: {injected}\n"),
            "the last valid state",
            false,
        ),
        Condition::StatePlusLegalActions => derail_prompt(
            inst,
            &format!("Last valid state: {check}\nAttempted wrong action: {injected}\nLegal moves: {legal}\n"),
            "the last valid state",
            false,
        ),
        Condition::StateguardRollback => stateguard_prompt(
            inst,
            &case.checkpoint_state,
            Some(&format!("{injected} was rejected: {}", deviation_message(case))),
        ),
        Condition::RepotFull | Condition::RepotNoPrefix | Condition::RepotRestart => {
            let view = CheckpointView::new(
                &inst.oracle_plan[..case.checkpoint_index],
                &case.checkpoint_state,
                Some(&case.injected_action),
                &deviation_message(case),
                4,
            );
            let opts = RepairOptions {
                show_prefix: condition != Condition::RepotNoPrefix,
                from_initial: condition == Condition::RepotRestart,
                max_moves,
            };
            build_repair_prompt(inst, &view, &opts)
        }
    }
}

fn stateguard_prompt(inst: &ProblemInstance, state: &EnvState, rejected: Option<&str>) -> String {
    let mut body = format!(
        "Current verified state: {}\nLegal moves: {}\n",
        env::render_state(state),
        env::plan_text(&env::legal_actions(state))
    );
    if let Some(r) = rejected {
        body.push_str(&format!("Rejected: {r}\n"));
    }
    derail_prompt(inst, &body, "the current state", true)
}

/// Default stateguard call budget: twice the oracle steps left after the
/// checkpoint.
pub fn stateguard_budget(inst: &ProblemInstance, case: &DerailCase) -> usize {
    2 * (inst.oracle_plan.len() - case.checkpoint_index)
}

/// Runs one condition on one case. `budget` overrides the stateguard call
/// budget.
pub fn run_condition(
    case: &DerailCase,
    inst: &ProblemInstance,
    condition: Condition,
    runner: &Runner<'_>,
    budget: Option<usize>,
) -> RecoveryRecord {
    let start = Instant::now();
    let mut session = Session::new(runner, format!("{}/{}", case.case_id, condition.name()));
    let resume = match condition.resume() {
        Resume::PostInjection => case.post_injection_state.clone(),
        Resume::Checkpoint => case.checkpoint_state.clone(),
        Resume::Initial => inst.initial_state.clone(),
    };
    let mut trace = TraceRecord {
        problem_id: inst.problem_id.clone(),
        method: "derail".into(),
        model: if runner.request.model_name.is_empty() {
            runner.backend.describe()
        } else {
            runner.request.model_name.clone()
        },
        environment: inst.environment,
        complexity: inst.complexity,
        success: false,
        llm_calls: Vec::new(),
        repot_repair_calls: None,
        repot_initial_pot_success: None,
        verified_prefix_len: 0,
        plan_len: 0,
        first_failure_index: None,
        verifier_error: None,
        runner_exception: None,
        wall_ms: 0,
        seed: case.injection_seed,
        route_taken: None,
        attempt1_success: None,
        attempt1_prefix_len: None,
        attempt1_plan_len: None,
        final_plan: Vec::new(),
    };
    if condition == Condition::StateguardRollback {
        stateguard(case, inst, runner, &mut session, &mut trace, budget.unwrap_or_else(|| stateguard_budget(inst, case)));
    } else {
        let prompt = condition_prompt(inst, case, condition, runner.config.repair_cap(inst));
        match session.ask(prompt) {
            Ok(text) => {
                let a = runner.attempt(inst, &resume, &text, PromptMode::Pot);
                trace.success = a.outcome.goal_reached;
                trace.verified_prefix_len = a.outcome.prefix_len();
                trace.plan_len = a.outcome.plan_len;
                trace.first_failure_index = (!a.outcome.fully_valid()).then_some(a.outcome.failure_index);
                let msg = a.message();
                trace.verifier_error = (!msg.is_empty()).then_some(msg);
                trace.final_plan = a.outcome.prefix.iter().map(ToString::to_string).collect();
            }
            Err(e) => trace.runner_exception = Some(e),
        }
    }
    trace.llm_calls = session.calls;
    trace.wall_ms = start.elapsed().as_millis() as u64;
    RecoveryRecord {
        trace,
        case_id: case.case_id.clone(),
        condition,
        resume_from: condition.resume(),
        checkpoint_index: case.checkpoint_index,
        injected_action: case.injected_action.to_string(),
        injection_seed: case.injection_seed,
        pairing_key: case.pairing_key(),
    }
}

/// One proposed action per call; rejected actions are never applied.
fn stateguard(
    case: &DerailCase,
    inst: &ProblemInstance,
    runner: &Runner<'_>,
    session: &mut Session<'_, '_>,
    trace: &mut TraceRecord,
    budget: usize,
) {
    let mut state = case.checkpoint_state.clone();
    let mut applied: Plan = Vec::new();
    let mut proposed = 0;
    let mut rejected = Some(format!("{} was rejected: {}", case.injected_action, deviation_message(case)));
    let mut reached = env::is_goal(&state, &inst.goal).unwrap_or(false);
    while !reached && session.calls.len() < budget {
        let prompt = stateguard_prompt(inst, &state, rejected.as_deref());
        let text = match session.ask(prompt) {
            Ok(t) => t,
            Err(e) => {
                trace.runner_exception = Some(e);
                break;
            }
        };
        let first = extract_plan(inst.environment, &text, PromptMode::Pot, runner.executor)
            .ok()
            .and_then(|p| p.into_iter().next());
        let Some(action) = first else {
            rejected = Some("no move could be extracted".into());
            continue;
        };
        proposed += 1;
        let r = env::step(&state, &action).expect("parsed for this environment");
        if r.valid {
            state = r.next_state;
            applied.push(action);
            rejected = None;
            reached = env::is_goal(&state, &inst.goal).unwrap_or(false);
        } else {
            rejected = Some(format!("{action} was rejected: {}", r.error));
        }
    }
    trace.success = reached && trace.runner_exception.is_none();
    trace.verified_prefix_len = applied.len();
    trace.plan_len = proposed;
    trace.verifier_error = if reached { None } else { rejected.or_else(|| Some("call budget exhausted".into())) };
    trace.final_plan = applied.iter().map(ToString::to_string).collect();
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionCount {
    pub successes: usize,
    pub total: usize,
}

impl ConditionCount {
    pub fn rate(&self) -> Option<f64> {
        (self.total > 0).then(|| 100.0 * self.successes as f64 / self.total as f64)
    }
}

/// Success per condition over all cases.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DerailSummary {
    pub conditions: Vec<Condition>,
    pub counts: BTreeMap<Condition, ConditionCount>,
}

impl fmt::Display for DerailSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<26} {:>9} {:>7} {:>8}", "condition", "successes", "cases", "rate%")?;
        for c in &self.conditions {
            let n = self.counts.get(c).copied().unwrap_or_default();
            let rate = n.rate().map_or("-".to_string(), |r| format!("{r:.1}"));
            writeln!(f, "{:<26} {:>9} {:>7} {:>8}", c.name(), n.successes, n.total, rate)?;
        }
        Ok(())
    }
}

/// Runs every condition on every case (cases in parallel, conditions of a
/// case in the given order) and appends one record per pair to `sink`.
pub fn run_derail(
    cases: &[DerailCase],
    suite: &[ProblemInstance],
    conditions: &[Condition],
    runner: &Runner<'_>,
    parallelism: usize,
    sink: &dyn TraceSink,
    stateguard_calls: Option<usize>,
) -> Result<DerailSummary, DerailError> {
    for (i, c) in conditions.iter().enumerate() {
        if conditions[..i].contains(c) {
            return Err(DerailError::DuplicateCondition(*c));
        }
    }
    let by_id: HashMap<&str, &ProblemInstance> = suite.iter().map(|i| (i.problem_id.as_str(), i)).collect();
    let mut work = Vec::with_capacity(cases.len());
    for case in cases {
        let inst = by_id.get(case.problem_id.as_str()).ok_or_else(|| DerailError::UnknownProblem {
            case_id: case.case_id.clone(),
            problem_id: case.problem_id.clone(),
        })?;
        work.push((case, *inst));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| DerailError::Io { path: "<thread pool>".into(), message: e.to_string() })?;
    let aborted = AtomicBool::new(false);
    let failure: Mutex<Option<std::io::Error>> = Mutex::new(None);
    let results: Vec<Vec<(Condition, bool)>> = pool.install(|| {
        work.par_iter()
            .map(|(case, inst)| {
                let mut out = Vec::new();
                for &cond in conditions {
                    if aborted.load(Ordering::SeqCst) {
                        break;
                    }
                    let rec = run_condition(case, inst, cond, runner, stateguard_calls);
                    let line = serde_json::to_value(&rec).expect("records serialize");
                    if let Err(e) = sink.append(&line) {
                        aborted.store(true, Ordering::SeqCst);
                        failure.lock().expect("failure slot poisoned").get_or_insert(e);
                        break;
                    }
                    out.push((cond, rec.trace.success));
                }
                out
            })
            .collect()
    });
    if let Some(e) = failure.into_inner().expect("failure slot poisoned") {
        return Err(DerailError::Sink(e));
    }
    let mut summary = DerailSummary { conditions: conditions.to_vec(), counts: BTreeMap::new() };
    for c in conditions {
        summary.counts.insert(*c, ConditionCount::default());
    }
    for (cond, ok) in results.into_iter().flatten() {
        let n = summary.counts.entry(cond).or_default();
        n.total += 1;
        n.successes += usize::from(ok);
    }
    Ok(summary)
}
