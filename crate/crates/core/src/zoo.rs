//! Stratified instance generation and the JSONL suite format.
//!
//! Suite files hold one JSON object per line with the fields of
//! [`ProblemInstance`]. States, goals and actions are stored in their
//! canonical text forms (see [`EnvState::encode`] and [`GoalSpec::encode`]).
//! Fields this version does not know about are kept and written back.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::env::river::Side;
use crate::env::{
    self, Action, BlocksState, CheckerState, EnvId, EnvState, Fact, GoalSpec, HanoiState, RiverState,
};
use crate::oracle::{self, ProbeResult};
use crate::seed;

/// Greedy probe step budget used by the triviality filter.
pub const GREEDY_BUDGET: usize = 100;
/// Random draws per stratum slot before generation gives up.
pub const ATTEMPTS_PER_SLOT: usize = 200;
/// Shortest oracle plan accepted; the recovery benchmark checkpoints a third
/// of the way through and needs at least this many steps.
pub const MIN_ORACLE_LENGTH: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub problem_id: String,
    pub environment: EnvId,
    pub complexity: usize,
    pub initial_state: EnvState,
    pub goal: GoalSpec,
    pub oracle_plan: Vec<Action>,
    pub oracle_plan_length: usize,
    pub natural_language_prompt: String,
    pub seed: u64,
    /// Unrecognised fields from the source line, preserved on write.
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    Cot,
    Pot,
}

#[derive(Debug, Error)]
pub enum ZooError {
    #[error("{env} complexity {complexity} is outside the supported range {min}..={max}")]
    Range { env: EnvId, complexity: usize, min: usize, max: usize },
    #[error("could not fill stratum {env} c={complexity} slot {slot} after {attempts} attempts")]
    Exhausted { env: EnvId, complexity: usize, slot: usize, attempts: usize },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stratum {
    pub environment: EnvId,
    pub complexities: Vec<usize>,
    pub per_complexity: usize,
}

/// Which (environment, complexity) cells to generate and how many each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratificationPlan {
    pub strata: Vec<Stratum>,
}

impl Default for StratificationPlan {
    /// 775 instances: Hanoi 8×25, Checker 9×25, River 4×25, Blocksworld 10×25.
    fn default() -> Self {
        let s = |environment, lo: usize, hi: usize| Stratum {
            environment,
            complexities: (lo..=hi).collect(),
            per_complexity: 25,
        };
        Self {
            strata: vec![
                s(EnvId::Hanoi, 2, 9),
                s(EnvId::Checker, 2, 10),
                s(EnvId::River, 3, 6),
                s(EnvId::Blocksworld, 3, 12),
            ],
        }
    }
}

impl StratificationPlan {
    pub fn total(&self) -> usize {
        self.strata.iter().map(|s| s.complexities.len() * s.per_complexity).sum()
    }
}

/// Supported complexity range per environment.
pub fn complexity_range(env: EnvId) -> (usize, usize) {
    match env {
        EnvId::Hanoi => (2, 14),
        EnvId::Checker => (1, 12),
        EnvId::River => (1, 6),
        EnvId::Blocksworld => (3, 16),
    }
}

pub fn block_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            let c = (b'a' + (i % 26) as u8) as char;
            if i < 26 { c.to_string() } else { format!("{c}{}", i / 26) }
        })
        .collect()
}

/// Problem statement shown to the model: rules, initial state and goal.
pub fn problem_statement(initial: &EnvState, goal: &GoalSpec) -> String {
    format!(
        "{}\n\nInitial state: {}\nGoal: {}",
        env::rules_text(initial.env()),
        env::render_state(initial),
        goal.render()
    )
}

pub const POT_CONTRACT: &str = "Write a Python program that prints exactly one line of the form\n\
moves = [action, action, ...]\n\
listing the complete plan in order, using the action syntax above. \
Put the whole program in a single ```python code block.";

pub const COT_CONTRACT: &str = "Reason step by step, then end your answer with exactly one line of the form\n\
moves = [action, action, ...]\n\
listing the complete plan in order, using the action syntax above.";

/// Full prompt for an instance: the problem statement followed by the output
/// contract for `mode`.
pub fn render_prompt(instance: &ProblemInstance, mode: PromptMode) -> String {
    let contract = match mode {
        PromptMode::Pot => POT_CONTRACT,
        PromptMode::Cot => COT_CONTRACT,
    };
    format!("{}\n\n{contract}", instance.natural_language_prompt)
}

impl ProblemInstance {
    /// Builds an instance around `oracle_plan` (possibly empty).
    pub fn new(
        problem_id: String,
        initial_state: EnvState,
        goal: GoalSpec,
        oracle_plan: Vec<Action>,
        seed: u64,
    ) -> Self {
        let initial_state = env::normalize(&initial_state);
        Self {
            problem_id,
            environment: initial_state.env(),
            complexity: initial_state.complexity(),
            natural_language_prompt: problem_statement(&initial_state, &goal),
            oracle_plan_length: oracle_plan.len(),
            initial_state,
            goal,
            oracle_plan,
            seed,
            extra: Map::new(),
        }
    }

    pub fn to_json(&self) -> Value {
        let mut obj = self.extra.clone();
        obj.insert("problem_id".into(), self.problem_id.clone().into());
        obj.insert("environment".into(), self.environment.name().into());
        obj.insert("complexity".into(), self.complexity.into());
        obj.insert("initial_state".into(), self.initial_state.encode().into());
        obj.insert("goal".into(), self.goal.encode().into());
        obj.insert(
            "oracle_plan".into(),
            Value::Array(self.oracle_plan.iter().map(|a| a.to_string().into()).collect()),
        );
        obj.insert("oracle_plan_length".into(), self.oracle_plan_length.into());
        obj.insert("natural_language_prompt".into(), self.natural_language_prompt.clone().into());
        obj.insert("seed".into(), self.seed.into());
        Value::Object(obj)
    }

    pub fn from_json(value: Value) -> Result<Self, String> {
        let Value::Object(mut obj) = value else {
            return Err("expected a JSON object".into());
        };
        fn take(obj: &mut Map<String, Value>, key: &str) -> Result<Value, String> {
            obj.remove(key).ok_or_else(|| format!("missing field '{key}'"))
        }
        fn text(v: Value, key: &str) -> Result<String, String> {
            match v {
                Value::String(s) => Ok(s),
                _ => Err(format!("field '{key}' must be a string")),
            }
        }
        fn int(v: Value, key: &str) -> Result<u64, String> {
            v.as_u64().ok_or_else(|| format!("field '{key}' must be a non-negative integer"))
        }
        let problem_id = text(take(&mut obj, "problem_id")?, "problem_id")?;
        let environment: EnvId = text(take(&mut obj, "environment")?, "environment")?.parse()?;
        let complexity = int(take(&mut obj, "complexity")?, "complexity")? as usize;
        let initial_state = EnvState::decode(environment, &text(take(&mut obj, "initial_state")?, "initial_state")?)
            .map_err(|e| e.to_string())?;
        let goal = GoalSpec::decode(environment, &text(take(&mut obj, "goal")?, "goal")?).map_err(|e| e.to_string())?;
        let Value::Array(items) = take(&mut obj, "oracle_plan")? else {
            return Err("field 'oracle_plan' must be an array".into());
        };
        let oracle_plan = items
            .into_iter()
            .map(|v| {
                let t = text(v, "oracle_plan")?;
                env::parse_action(environment, &t).map_err(|e| format!("oracle_plan: {e}"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let oracle_plan_length = int(take(&mut obj, "oracle_plan_length")?, "oracle_plan_length")? as usize;
        let natural_language_prompt =
            text(take(&mut obj, "natural_language_prompt")?, "natural_language_prompt")?;
        let seed = int(take(&mut obj, "seed")?, "seed")?;
        Ok(Self {
            problem_id,
            environment,
            complexity,
            initial_state,
            goal,
            oracle_plan,
            oracle_plan_length,
            natural_language_prompt,
            seed,
            extra: obj,
        })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ZooError + '_ {
    move |source| ZooError::Io { path: path.display().to_string(), source }
}

pub fn write_suite(instances: &[ProblemInstance], path: &Path) -> Result<(), ZooError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for inst in instances {
        serde_json::to_writer(&mut w, &inst.to_json()).map_err(|e| io_err(path)(e.into()))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_suite(path: &Path) -> Result<Vec<ProblemInstance>, ZooError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line)
            .map_err(|e| ZooError::Malformed { line: i + 1, message: e.to_string() })?;
        out.push(ProblemInstance::from_json(value).map_err(|message| ZooError::Malformed { line: i + 1, message })?);
    }
    Ok(out)
}

type Draw = (EnvState, GoalSpec);

fn draw_hanoi(n: usize, rng: &mut impl Rng) -> Draw {
    let src = rng.gen_range(0..3);
    let dst = (src + rng.gen_range(1..3)) % 3;
    (
        EnvState::Hanoi(HanoiState::tower(n as u32, src)),
        GoalSpec::State(EnvState::Hanoi(HanoiState::tower(n as u32, dst))),
    )
}

fn draw_checker(n: usize) -> Draw {
    (
        EnvState::Checker(CheckerState::initial(n)),
        GoalSpec::State(EnvState::Checker(CheckerState::goal(n))),
    )
}

/// Random walk backwards from the goal. Crossings are reversible, so every
/// state on the walk can reach the goal.
fn draw_river(n: usize, rng: &mut impl Rng) -> Draw {
    let goal = EnvState::River(RiverState::all_on(n as u32, Side::Right));
    let mut state = goal.clone();
    let walk = rng.gen_range(4 * n..=8 * n);
    for _ in 0..walk {
        let moves = env::legal_actions(&state);
        let Some(a) = moves.choose(rng) else { break };
        state = env::step(&state, a).expect("same environment").next_state;
    }
    (state, GoalSpec::State(goal))
}

fn random_towers(names: &[String], rng: &mut impl Rng) -> Vec<Vec<String>> {
    let mut order = names.to_vec();
    order.shuffle(rng);
    let mut towers: Vec<Vec<String>> = Vec::new();
    for b in order {
        // Start a new tower with probability 1/3, otherwise stack on a random one.
        if towers.is_empty() || rng.gen_range(0..3) == 0 {
            towers.push(vec![b]);
        } else {
            let i = rng.gen_range(0..towers.len());
            towers[i].push(b);
        }
    }
    towers
}

fn draw_blocks(n: usize, rng: &mut impl Rng) -> Draw {
    let names = block_names(n);
    let start = BlocksState::from_towers(&random_towers(&names, rng));
    let goal_state = BlocksState::from_towers(&random_towers(&names, rng));
    let goal: Vec<Fact> = goal_state
        .facts
        .into_iter()
        .filter(|f| matches!(f, Fact::On(..) | Fact::OnTable(_)))
        .collect();
    (EnvState::Blocks(start), GoalSpec::Facts(goal))
}

fn check_range(env: EnvId, complexity: usize) -> Result<(), ZooError> {
    let (min, max) = complexity_range(env);
    if complexity < min || complexity > max {
        return Err(ZooError::Range { env, complexity, min, max });
    }
    Ok(())
}

fn stratum_cell(env: EnvId, complexity: usize, count: usize, floor: bool, seed: u64) -> Result<Vec<ProblemInstance>, ZooError> {
    let mut cache: HashMap<(EnvState, String), Option<Vec<Action>>> = HashMap::new();
    let mut out = Vec::with_capacity(count);
    for slot in 0..count {
        let slot_seed = seed::mix(&[seed, env as u64, complexity as u64, slot as u64]);
        let mut rng = seed::rng(slot_seed);
        let mut found = None;
        for _ in 0..ATTEMPTS_PER_SLOT {
            let (start, goal) = match env {
                EnvId::Hanoi => draw_hanoi(complexity, &mut rng),
                EnvId::Checker => draw_checker(complexity),
                EnvId::River => draw_river(complexity, &mut rng),
                EnvId::Blocksworld => draw_blocks(complexity, &mut rng),
            };
            if env::is_goal(&start, &goal).unwrap_or(true) {
                continue;
            }
            let key = (start.clone(), goal.encode());
            let plan = cache
                .entry(key)
                .or_insert_with(|| oracle::solve(&start, &goal).ok())
                .clone();
            let Some(plan) = plan else { continue };
            if plan.len() < MIN_ORACLE_LENGTH {
                continue;
            }
            if floor && oracle::greedy_probe(&start, &goal, GREEDY_BUDGET) == ProbeResult::Solved {
                continue;
            }
            found = Some((start, goal, plan));
            break;
        }
        let Some((start, goal, plan)) = found else {
            return Err(ZooError::Exhausted { env, complexity, slot, attempts: ATTEMPTS_PER_SLOT });
        };
        let id = format!("{}-c{:02}-{:03}", env.name(), complexity, slot);
        out.push(ProblemInstance::new(id, start, goal, plan, slot_seed));
    }
    Ok(out)
}

/// Generates every stratum of `plan`. Output order follows the plan; ids and
/// contents depend only on `(seed, environment, complexity, slot)`.
pub fn generate_suite(plan: &StratificationPlan, seed: u64) -> Result<Vec<ProblemInstance>, ZooError> {
    let mut cells = Vec::new();
    for stratum in &plan.strata {
        let mut sorted = stratum.complexities.clone();
        sorted.sort_unstable();
        sorted.dedup();
        for &c in &stratum.complexities {
            check_range(stratum.environment, c)?;
            let floor = sorted.iter().take(2).any(|&f| f == c);
            cells.push((stratum.environment, c, stratum.per_complexity, floor));
        }
    }
    let results: Vec<Result<Vec<ProblemInstance>, ZooError>> = cells
        .par_iter()
        .map(|&(env, c, count, floor)| stratum_cell(env, c, count, floor, seed))
        .collect();
    let mut out = Vec::with_capacity(plan.total());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay;

    fn small_plan() -> StratificationPlan {
        StratificationPlan {
            strata: vec![
                Stratum { environment: EnvId::Hanoi, complexities: vec![3, 4], per_complexity: 2 },
                Stratum { environment: EnvId::River, complexities: vec![3, 4], per_complexity: 2 },
                Stratum { environment: EnvId::Blocksworld, complexities: vec![4], per_complexity: 3 },
            ],
        }
    }

    #[test]
    fn small_suite_is_valid_and_stratified() {
        let suite = generate_suite(&small_plan(), 7).unwrap();
        assert_eq!(suite.len(), 11);
        for inst in &suite {
            assert_eq!(inst.oracle_plan_length, inst.oracle_plan.len());
            let out = replay::replay(inst.environment, &inst.initial_state, &inst.oracle_plan, &inst.goal).unwrap();
            assert!(out.goal_reached && out.fully_valid(), "{}", inst.problem_id);
        }
        assert_eq!(suite.iter().filter(|i| i.environment == EnvId::River).count(), 4);
    }

    #[test]
    fn out_of_range_is_rejected() {
        let plan = StratificationPlan {
            strata: vec![Stratum { environment: EnvId::River, complexities: vec![40], per_complexity: 1 }],
        };
        assert!(matches!(generate_suite(&plan, 1), Err(ZooError::Range { .. })));
    }

    #[test]
    fn prompt_modes_share_statement() {
        let suite = generate_suite(&small_plan(), 3).unwrap();
        let inst = &suite[0];
        let pot = render_prompt(inst, PromptMode::Pot);
        let cot = render_prompt(inst, PromptMode::Cot);
        assert!(pot.contains("moves = [") && pot.contains("Initial state: peg"));
        assert_eq!(pot.strip_suffix(POT_CONTRACT), cot.strip_suffix(COT_CONTRACT));
    }

    #[test]
    fn unknown_fields_survive() {
        let suite = generate_suite(&small_plan(), 3).unwrap();
        let mut v = suite[0].to_json();
        v.as_object_mut().unwrap().insert("source".into(), "planbench".into());
        let back = ProblemInstance::from_json(v.clone()).unwrap();
        assert_eq!(back.extra["source"], "planbench");
        assert_eq!(back.to_json(), v);
    }
}
