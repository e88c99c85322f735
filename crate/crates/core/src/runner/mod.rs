//! Planning methods and the controller that mediates every model call.
//!
//! Each method turns one [`ProblemInstance`] into one [`TraceRecord`]. Model
//! output is never trusted: success is always `is_goal` on the state reached
//! by verified replay.

mod prompt;
mod suite;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{self, Action, EnvId, EnvState, Plan};
use crate::gateway::{
    extract_plan, CallContext, CompletionRequest, ExtractionError, ModelBackend, ProgramExecutor, TokenSource,
};
use crate::replay::{self, ReplayOutcome};
use crate::seed;
use crate::zoo::{ProblemInstance, PromptMode};

pub use prompt::{
    blocked, build_cot_prompt, build_pot_prompt, build_repair_prompt, repair_stable_block, CheckpointView,
    RepairOptions, CHECKPOINT_MARKER, MAX_BLOCKED,
};
pub use suite::{
    read_trace_file, run_suite, CellCount, JsonlSink, MemorySink, RunError, SuiteSummary, TraceFile, TraceSink,
    HEADER_KEY,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cot,
    Pot,
    Sc,
    PotRetry,
    Repot,
    AdaptiveRepot,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Cot, Method::Pot, Method::Sc, Method::PotRetry, Method::Repot, Method::AdaptiveRepot];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cot => "cot",
            Method::Pot => "pot",
            Method::Sc => "sc",
            Method::PotRetry => "pot_retry",
            Method::Repot => "repot",
            Method::AdaptiveRepot => "adaptive_repot",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown method '{0}' (valid methods: cot, pot, sc, pot_retry, repot, adaptive_repot)")]
pub struct UnknownMethod(pub String);

impl FromStr for Method {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| UnknownMethod(s.to_string()))
    }
}

/// Adaptive dispatcher routes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    InitialSuccess,
    FreshRetryEmpty,
    FreshRetryShortPrefix,
    SuffixRepair,
}

impl Route {
    pub const ALL: [Route; 4] =
        [Route::InitialSuccess, Route::FreshRetryEmpty, Route::FreshRetryShortPrefix, Route::SuffixRepair];

    pub fn name(self) -> &'static str {
        match self {
            Route::InitialSuccess => "initial_success",
            Route::FreshRetryEmpty => "fresh_retry_empty",
            Route::FreshRetryShortPrefix => "fresh_retry_short_prefix",
            Route::SuffixRepair => "suffix_repair",
        }
    }

    pub fn parse(s: &str) -> Option<Route> {
        Route::ALL.into_iter().find(|r| r.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid method configuration: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodConfig {
    pub method: Method,
    /// Repair budget.
    #[serde(rename = "R")]
    pub r: usize,
    /// Verified moves shown in the repair prompt tail.
    #[serde(rename = "T")]
    pub t: usize,
    /// Self-consistency samples.
    pub k: usize,
    pub phi_threshold: f64,
    /// Move cap `K` in the repair contract; `None` means twice the oracle
    /// plan length, or [`DEFAULT_REPAIR_CAP`] without an oracle plan.
    #[serde(rename = "K")]
    pub max_repair_moves: Option<usize>,
}

pub const DEFAULT_REPAIR_CAP: usize = 100;

impl Default for MethodConfig {
    fn default() -> Self {
        Self { method: Method::Repot, r: 1, t: 4, k: 8, phi_threshold: 0.15, max_repair_moves: None }
    }
}

impl MethodConfig {
    pub fn new(method: Method) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(ConfigError("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.phi_threshold) {
            return Err(ConfigError(format!("phi_threshold {} is outside [0, 1]", self.phi_threshold)));
        }
        if self.max_repair_moves == Some(0) {
            return Err(ConfigError("K must be at least 1".into()));
        }
        Ok(())
    }

    pub fn repair_cap(&self, instance: &ProblemInstance) -> usize {
        self.max_repair_moves.unwrap_or(if instance.oracle_plan_length == 0 {
            DEFAULT_REPAIR_CAP
        } else {
            2 * instance.oracle_plan_length
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmCall {
    pub prompt: String,
    pub output_text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
    pub token_source: TokenSource,
}

/// One line of a trace file. All keys are always written; absent values are
/// `null`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub problem_id: String,
    pub method: String,
    pub model: String,
    pub environment: EnvId,
    pub complexity: usize,
    pub success: bool,
    pub llm_calls: Vec<LlmCall>,
    pub repot_repair_calls: Option<usize>,
    pub repot_initial_pot_success: Option<bool>,
    pub verified_prefix_len: usize,
    pub plan_len: usize,
    pub first_failure_index: Option<usize>,
    pub verifier_error: Option<String>,
    pub runner_exception: Option<String>,
    pub wall_ms: u64,
    pub seed: u64,
    pub route_taken: Option<String>,
    /// First-attempt outcome for methods that may call again.
    pub attempt1_success: Option<bool>,
    pub attempt1_prefix_len: Option<usize>,
    pub attempt1_plan_len: Option<usize>,
    pub final_plan: Vec<String>,
}

/// Keys of a serialized [`TraceRecord`], in order.
pub const TRACE_FIELDS: [&str; 21] = [
    "problem_id",
    "method",
    "model",
    "environment",
    "complexity",
    "success",
    "llm_calls",
    "repot_repair_calls",
    "repot_initial_pot_success",
    "verified_prefix_len",
    "plan_len",
    "first_failure_index",
    "verifier_error",
    "runner_exception",
    "wall_ms",
    "seed",
    "route_taken",
    "attempt1_success",
    "attempt1_prefix_len",
    "attempt1_plan_len",
    "final_plan",
];

impl TraceRecord {
    pub fn prompt_tokens(&self) -> u64 {
        self.llm_calls.iter().map(|c| c.prompt_tokens).sum()
    }

    pub fn completion_tokens(&self) -> u64 {
        self.llm_calls.iter().map(|c| c.completion_tokens).sum()
    }

    /// Copy with timing fields zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.wall_ms = 0;
        for c in &mut r.llm_calls {
            c.latency_ms = 0;
        }
        r
    }
}

/// Model plumbing shared by all methods.
pub struct Runner<'a> {
    pub backend: &'a dyn ModelBackend,
    pub executor: &'a dyn ProgramExecutor,
    /// Request settings; the prompt field is replaced per call.
    pub request: CompletionRequest,
    pub config: MethodConfig,
}

/// Calls made for one logical stream.
pub struct Session<'r, 'a> {
    runner: &'r Runner<'a>,
    key: String,
    pub calls: Vec<LlmCall>,
}

impl<'r, 'a> Session<'r, 'a> {
    pub fn new(runner: &'r Runner<'a>, key: impl Into<String>) -> Self {
        Self { runner, key: key.into(), calls: Vec::new() }
    }

    /// One completion; a backend error is returned as `Err`.
    pub fn ask(&mut self, prompt: String) -> Result<String, String> {
        let mut req = self.runner.request.clone();
        req.prompt = prompt;
        let ordinal = self.calls.len();
        let res = self.runner.backend.complete(CallContext { key: &self.key, ordinal }, &req);
        self.calls.push(LlmCall {
            prompt: req.prompt,
            output_text: res.text.clone(),
            prompt_tokens: res.prompt_tokens,
            completion_tokens: res.completion_tokens,
            latency_ms: res.latency_ms,
            token_source: res.token_source,
        });
        match res.backend_error {
            Some(e) => Err(e),
            None => Ok(res.text),
        }
    }
}

/// A proposed plan after extraction and replay from some start state.
#[derive(Debug, Clone)]
pub(crate) struct Attempt {
    pub(crate) plan: Plan,
    pub(crate) outcome: ReplayOutcome,
    pub(crate) extraction: Option<ExtractionError>,
}

impl Attempt {
    pub(crate) fn failed_action(&self) -> Option<&Action> {
        self.plan.get(self.outcome.failure_index - 1)
    }

    /// Verifier message for the next prompt.
    pub(crate) fn message(&self) -> String {
        if !self.outcome.error.is_empty() {
            self.outcome.error.clone()
        } else if let Some(e) = &self.extraction {
            format!("no moves could be extracted from the previous answer ({e})")
        } else if self.outcome.goal_reached {
            String::new()
        } else {
            "all moves were valid but the goal was not reached".into()
        }
    }
}

/// Committed verified prefix plus the attempt that produced its tail.
struct Progress {
    committed: Vec<Action>,
    state: EnvState,
    last: Attempt,
    last_offset: usize,
}

impl Progress {
    fn fresh(attempt: Attempt) -> Self {
        Self {
            committed: attempt.outcome.prefix.clone(),
            state: attempt.outcome.boundary_state.clone(),
            last: attempt,
            last_offset: 0,
        }
    }

    fn extend(&mut self, attempt: Attempt) {
        self.last_offset = self.committed.len();
        self.committed.extend(attempt.outcome.prefix.iter().cloned());
        self.state = attempt.outcome.boundary_state.clone();
        self.last = attempt;
    }

    fn success(&self) -> bool {
        self.last.outcome.goal_reached
    }
}

impl<'a> Runner<'a> {
    pub fn new(backend: &'a dyn ModelBackend, executor: &'a dyn ProgramExecutor, config: MethodConfig) -> Self {
        Self { backend, executor, request: CompletionRequest::new(""), config }
    }

    fn model_label(&self) -> String {
        if self.request.model_name.is_empty() {
            self.backend.describe()
        } else {
            self.request.model_name.clone()
        }
    }

    /// Extracts a plan (empty on extraction failure) and replays it.
    pub(crate) fn attempt(
        &self,
        instance: &ProblemInstance,
        start: &EnvState,
        text: &str,
        mode: PromptMode,
    ) -> Attempt {
        let (plan, extraction) = match extract_plan(instance.environment, text, mode, self.executor) {
            Ok(p) => (p, None),
            Err(e) => (Vec::new(), Some(e)),
        };
        let outcome = replay::replay(instance.environment, start, &plan, &instance.goal)
            .expect("instance states match their environment");
        Attempt { plan, outcome, extraction }
    }

    fn record(&self, instance: &ProblemInstance, run_seed: u64) -> TraceRecord {
        TraceRecord {
            problem_id: instance.problem_id.clone(),
            method: self.config.method.name().into(),
            model: self.model_label(),
            environment: instance.environment,
            complexity: instance.complexity,
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
            seed: seed::mix(&[run_seed, seed::hash_str(&instance.problem_id)]),
            route_taken: None,
            attempt1_success: None,
            attempt1_prefix_len: None,
            attempt1_plan_len: None,
            final_plan: Vec::new(),
        }
    }

    /// Runs the configured method on one instance.
    pub fn run(&self, instance: &ProblemInstance, run_seed: u64) -> TraceRecord {
        let start = Instant::now();
        let mut rec = self.record(instance, run_seed);
        let mut session = Session::new(self, instance.problem_id.clone());
        let result = match self.config.method {
            Method::Cot => self.single(instance, &mut session, PromptMode::Cot),
            Method::Pot => self.single(instance, &mut session, PromptMode::Pot),
            Method::Sc => self.sc(instance, &mut session),
            Method::PotRetry => self.pot_retry(instance, &mut session, &mut rec),
            Method::Repot => self.repot(instance, &mut session, &mut rec, false),
            Method::AdaptiveRepot => self.repot(instance, &mut session, &mut rec, true),
        };
        match result {
            Ok(progress) => fill(&mut rec, &progress),
            Err((progress, e)) => {
                if let Some(p) = progress {
                    fill(&mut rec, &p);
                }
                rec.success = false;
                rec.runner_exception = Some(e);
            }
        }
        rec.llm_calls = session.calls;
        rec.wall_ms = start.elapsed().as_millis() as u64;
        rec
    }

    fn single(&self, inst: &ProblemInstance, s: &mut Session, mode: PromptMode) -> Outcome {
        let prompt = match mode {
            PromptMode::Pot => build_pot_prompt(inst),
            PromptMode::Cot => build_cot_prompt(inst),
        };
        let text = s.ask(prompt).map_err(|e| (None, e))?;
        Ok(Progress::fresh(self.attempt(inst, &inst.initial_state, &text, mode)))
    }

    fn sc(&self, inst: &ProblemInstance, s: &mut Session) -> Outcome {
        let prompt = build_cot_prompt(inst);
        let mut samples: Vec<Result<Plan, ExtractionError>> = Vec::new();
        for _ in 0..self.config.k {
            let text = s.ask(prompt.clone()).map_err(|e| (None, e))?;
            samples.push(extract_plan(inst.environment, &text, PromptMode::Cot, self.executor));
        }
        let plans: Vec<Vec<String>> = samples
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .map(|p| p.iter().map(ToString::to_string).collect())
            .collect();
        let Some(winner) = majority(&plans) else {
            let extraction = samples.into_iter().find_map(Result::err);
            let outcome = replay::replay(inst.environment, &inst.initial_state, &[], &inst.goal)
                .expect("instance states match their environment");
            return Ok(Progress::fresh(Attempt { plan: Vec::new(), outcome, extraction }));
        };
        let plan = samples
            .into_iter()
            .filter_map(Result::ok)
            .find(|p| p.len() == plans[winner].len() && p.iter().zip(&plans[winner]).all(|(a, b)| a.to_string() == *b))
            .expect("winner comes from a sample");
        let outcome = replay::replay(inst.environment, &inst.initial_state, &plan, &inst.goal)
            .expect("instance states match their environment");
        Ok(Progress::fresh(Attempt { plan, outcome, extraction: None }))
    }

    fn pot_retry(&self, inst: &ProblemInstance, s: &mut Session, rec: &mut TraceRecord) -> Outcome {
        let prompt = build_pot_prompt(inst);
        let text = s.ask(prompt.clone()).map_err(|e| (None, e))?;
        let first = Progress::fresh(self.attempt(inst, &inst.initial_state, &text, PromptMode::Pot));
        note_attempt1(rec, &first);
        if first.success() {
            return Ok(first);
        }
        let text = s.ask(prompt).map_err(|e| (Some(first), e))?;
        Ok(Progress::fresh(self.attempt(inst, &inst.initial_state, &text, PromptMode::Pot)))
    }

    /// Algorithm of verified-prefix repair; with `adaptive`, low prefix
    /// fractions are routed to fresh retries instead.
    fn repot(&self, inst: &ProblemInstance, s: &mut Session, rec: &mut TraceRecord, adaptive: bool) -> Outcome {
        let prompt = build_pot_prompt(inst);
        rec.repot_repair_calls = Some(0);
        let text = s.ask(prompt.clone()).map_err(|e| (None, e))?;
        let mut progress = Progress::fresh(self.attempt(inst, &inst.initial_state, &text, PromptMode::Pot));
        note_attempt1(rec, &progress);
        rec.repot_initial_pot_success = Some(progress.success());
        if progress.success() {
            if adaptive {
                rec.route_taken = Some(Route::InitialSuccess.name().into());
            }
            return Ok(progress);
        }
        let route = if adaptive {
            route_for(&progress.last.outcome, self.config.phi_threshold)
        } else {
            Route::SuffixRepair
        };
        if adaptive {
            rec.route_taken = Some(route.name().into());
        }
        let opts = RepairOptions { show_prefix: true, from_initial: false, max_moves: self.config.repair_cap(inst) };
        for i in 0..self.config.r {
            let next = if route == Route::SuffixRepair {
                let view = CheckpointView::new(
                    &progress.committed,
                    &progress.state,
                    progress.last.failed_action(),
                    &progress.last.message(),
                    self.config.t,
                );
                build_repair_prompt(inst, &view, &opts)
            } else {
                prompt.clone()
            };
            let text = match s.ask(next) {
                Ok(t) => t,
                Err(e) => {
                    rec.repot_repair_calls = Some(i + 1);
                    return Err((Some(progress), e));
                }
            };
            rec.repot_repair_calls = Some(i + 1);
            if route == Route::SuffixRepair {
                let a = self.attempt(inst, &progress.state, &text, PromptMode::Pot);
                progress.extend(a);
            } else {
                progress = Progress::fresh(self.attempt(inst, &inst.initial_state, &text, PromptMode::Pot));
            }
            if progress.success() {
                break;
            }
        }
        Ok(progress)
    }
}

type Outcome = Result<Progress, (Option<Progress>, String)>;

/// Dispatch rule on the initial replay: fresh retry when nothing was
/// proposed or the verified fraction `(k-1)/n` is below `threshold`.
pub fn route_for(outcome: &ReplayOutcome, threshold: f64) -> Route {
    if outcome.goal_reached {
        Route::InitialSuccess
    } else if outcome.plan_len == 0 {
        Route::FreshRetryEmpty
    } else if (outcome.prefix_len() as f64) / (outcome.plan_len as f64) < threshold {
        Route::FreshRetryShortPrefix
    } else {
        Route::SuffixRepair
    }
}

/// Index of the first plan among those with the highest count.
pub fn majority(plans: &[Vec<String>]) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for (i, p) in plans.iter().enumerate() {
        let count = plans.iter().filter(|q| *q == p).count();
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((i, count));
        }
    }
    best.map(|(i, _)| i)
}

fn note_attempt1(rec: &mut TraceRecord, p: &Progress) {
    rec.attempt1_success = Some(p.success());
    rec.attempt1_prefix_len = Some(p.last.outcome.prefix_len());
    rec.attempt1_plan_len = Some(p.last.outcome.plan_len);
}

fn fill(rec: &mut TraceRecord, p: &Progress) {
    let out = &p.last.outcome;
    rec.success = p.success();
    rec.verified_prefix_len = p.committed.len();
    rec.plan_len = p.last_offset + out.plan_len;
    rec.first_failure_index = (!out.fully_valid()).then_some(p.last_offset + out.failure_index);
    let msg = p.last.message();
    rec.verifier_error = (!msg.is_empty()).then_some(msg);
    rec.final_plan = p.committed.iter().map(ToString::to_string).collect();
}

/// Replays a record's committed plan from the instance start.
pub fn replay_final_plan(instance: &ProblemInstance, rec: &TraceRecord) -> Result<ReplayOutcome, String> {
    let plan: Vec<Action> = rec
        .final_plan
        .iter()
        .map(|t| env::parse_action(instance.environment, t).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    replay::replay(instance.environment, &instance.initial_state, &plan, &instance.goal).map_err(|e| e.to_string())
}
