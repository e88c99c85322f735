//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each and exits nonzero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::*;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repot_core::analysis::{self, PairedSample};
use repot_core::derail::{self, Condition, DerailCase, RecoveryRecord};
use repot_core::env::{self, Action, BlockOp, BlocksState, EnvId, EnvState, Fact};
use repot_core::gateway::{CallContext, CompletionRequest, FnBackend, ScriptedBackend};
use repot_core::planbench;
use repot_core::replay;
use repot_core::runner::{
    self, read_trace_file, JsonlSink, MemorySink, Method, MethodConfig, Route, Runner, TraceRecord, TRACE_FIELDS,
};
use repot_core::zoo::{generate_suite, ProblemInstance, StratificationPlan, Stratum};
use sha2::{Digest, Sha256};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn default_zoo() -> &'static (Vec<ProblemInstance>, Duration) {
    static ZOO: OnceLock<(Vec<ProblemInstance>, Duration)> = OnceLock::new();
    ZOO.get_or_init(|| {
        let t = Instant::now();
        let suite = generate_suite(&StratificationPlan::default(), 1).expect("default plan generates");
        (suite, t.elapsed())
    })
}

/// 200 instances over all four environments.
fn mixed_suite() -> &'static [ProblemInstance] {
    static SUITE: OnceLock<Vec<ProblemInstance>> = OnceLock::new();
    SUITE.get_or_init(|| {
        let s = |environment, complexities: Vec<usize>| Stratum { environment, complexities, per_complexity: 10 };
        let plan = StratificationPlan {
            strata: vec![
                s(EnvId::Hanoi, vec![3, 4, 5, 6, 7]),
                s(EnvId::Checker, vec![2, 3, 4, 5, 6]),
                s(EnvId::River, vec![3, 4]),
                s(EnvId::Blocksworld, (4..12).collect()),
            ],
        };
        let suite = generate_suite(&plan, 21).expect("mixed plan generates");
        assert_eq!(suite.len(), 200);
        suite
    })
}

fn c1_oracle_validity() -> Check {
    let (suite, elapsed) = default_zoo();
    ensure!(suite.len() == 775, "suite has {} instances", suite.len());
    for inst in suite {
        let out = replay::replay(inst.environment, &inst.initial_state, &inst.oracle_plan, &inst.goal)
            .map_err(|e| format!("{}: {e}", inst.problem_id))?;
        ensure!(out.fully_valid() && out.goal_reached, "{} oracle does not reach the goal", inst.problem_id);
        if inst.environment == EnvId::Hanoi && inst.complexity <= 8 {
            let want = (1usize << inst.complexity) - 1;
            ensure!(inst.oracle_plan.len() == want, "{} has length {} not {want}", inst.problem_id, inst.oracle_plan.len());
        }
    }
    ensure!(*elapsed < Duration::from_secs(300), "generation took {elapsed:?}");
    Ok(format!("775/775 oracle plans replay to goal, generated in {:.1}s", elapsed.as_secs_f64()))
}

fn c2_replay_correctness() -> Check {
    let (suite, _) = default_zoo();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut per_env: BTreeMap<EnvId, usize> = BTreeMap::new();
    let mut violations = 0;
    let cases = 10_000;
    for _ in 0..cases {
        let inst = &suite[rng.gen_range(0..suite.len())];
        let j = rng.gen_range(0..inst.oracle_plan.len());
        let mut plan = corrupt(inst, j);
        let universe = env::action_universe(&inst.initial_state);
        for _ in 0..rng.gen_range(0..3) {
            plan.push(universe[rng.gen_range(0..universe.len())].clone());
        }
        let start = inst.initial_state.clone();
        let verdict = replay_violation(inst, &inst.initial_state, &plan);
        let out = replay::replay(inst.environment, &inst.initial_state, &plan, &inst.goal).unwrap();
        if verdict.is_some() || out.failure_index != j + 1 || start != inst.initial_state {
            violations += 1;
        }
        *per_env.entry(inst.environment).or_default() += 1;
    }
    ensure!(per_env.len() == 4, "only {} environments sampled", per_env.len());
    ensure!(violations == 0, "{violations} violations");
    Ok(format!("{cases} cases, 0 violations ({per_env:?})"))
}

fn c3_triple_separation() -> Check {
    let inst = hanoi(4, "h4");
    let j = 5;
    let initial = moves(&corrupt(&inst, j));
    let suffix = moves(&inst.oracle_plan[j..]);
    let run = |method, texts: Vec<String>| {
        let backend = ScriptedBackend::queue(texts);
        Runner::new(&backend, &NoCode, MethodConfig::new(method)).run(&inst, 0)
    };
    let r = run(Method::Repot, vec![initial.clone(), suffix.clone()]);
    ensure!(r.success, "repot failed: {:?}", r.verifier_error);
    ensure!(r.llm_calls.len() == 2, "repot used {} calls", r.llm_calls.len());
    let committed = runner::replay_final_plan(&inst, &r)?;
    ensure!(committed.fully_valid() && committed.goal_reached, "committed plan does not replay to goal");
    let p = run(Method::Pot, vec![initial.clone(), suffix]);
    ensure!(!p.success && p.llm_calls.len() == 1, "pot should fail in one call");
    let t = run(Method::PotRetry, vec![initial.clone(), initial]);
    ensure!(!t.success && t.llm_calls.len() == 2, "pot_retry should fail in two calls");
    Ok("repot succeeds in 2 calls; pot and pot_retry fail".into())
}

/// Oracle plan for problems in `good`, otherwise a plan corrupted halfway;
/// every later call repeats the oracle plan from the boundary.
fn mixed_policy(good: BTreeSet<String>) -> impl Fn(CallContext<'_>, &CompletionRequest) -> Result<String, String> {
    let by_id: HashMap<String, ProblemInstance> =
        mixed_suite().iter().map(|i| (i.problem_id.clone(), i.clone())).collect();
    move |call, _| {
        let inst = &by_id[call.key];
        let j = inst.oracle_plan.len() / 2;
        Ok(if good.contains(call.key) {
            moves(&inst.oracle_plan)
        } else if call.ordinal == 0 {
            moves(&corrupt(inst, j))
        } else {
            moves(&inst.oracle_plan[j..])
        })
    }
}

fn c4_budget_laws() -> Check {
    let suite = mixed_suite();
    // 172 of 200 (86%) answer correctly on the first call.
    let good: BTreeSet<String> = suite.iter().enumerate().filter(|(i, _)| i % 50 >= 7).map(|(_, x)| x.problem_id.clone()).collect();
    ensure!(good.len() == 172, "mix has {} successes", good.len());
    let backend = FnBackend::new(mixed_policy(good));
    let mut report = Vec::new();
    for method in [Method::Pot, Method::PotRetry, Method::Sc, Method::Repot] {
        let runner = Runner::new(&backend, &NoCode, MethodConfig::new(method));
        let sink = MemorySink::default();
        runner::run_suite(suite, &runner, 8, &sink, 4).map_err(|e| e.to_string())?;
        let recs: Vec<TraceRecord> =
            sink.lines.lock().unwrap().iter().map(|v| serde_json::from_value(v.clone()).unwrap()).collect();
        ensure!(recs.len() == 200, "{method}: {} records", recs.len());
        let calls: Vec<usize> = recs.iter().map(|r| r.llm_calls.len()).collect();
        let ok = match method {
            Method::Pot => calls.iter().all(|&c| c == 1),
            Method::PotRetry | Method::Repot => calls.iter().all(|&c| c <= 2),
            Method::Sc => calls.iter().all(|&c| c == 8),
            _ => unreachable!(),
        };
        ensure!(ok, "{method} call counts out of bounds: {calls:?}");
        if method == Method::Repot {
            let total: usize = calls.iter().sum();
            let failed_initial = recs.iter().filter(|r| r.repot_initial_pot_success == Some(false)).count();
            ensure!(total == 200 + failed_initial, "repot calls {total} != 200 + {failed_initial}");
            ensure!(Ratio::new(total, 200) == Ratio::new(114, 100), "mean repot calls {total}/200");
            let cost = analysis::cost_decomposition(&recs);
            ensure!(format!("{:.2}", cost[0].mean_calls) == "1.14", "cost table shows {}", cost[0].mean_calls);
        }
        let mean = calls.iter().sum::<usize>() as f64 / calls.len() as f64;
        report.push(format!("{method}={mean:.2}"));
    }
    Ok(format!("mean calls {}", report.join(" ")))
}

fn c5_adaptive_routing() -> Check {
    let inst = hanoi(4, "h4");
    let with_bad = |j: usize| {
        let mut p = corrupt(&inst, j);
        p.truncate(10);
        moves(&p)
    };
    let full = moves(&inst.oracle_plan);
    let scenarios: Vec<(&str, String, Route)> = vec![
        ("success", full.clone(), Route::InitialSuccess),
        ("n=0", GARBAGE.to_string(), Route::FreshRetryEmpty),
        ("phi=0.10", with_bad(1), Route::FreshRetryShortPrefix),
        ("phi=0.50", with_bad(5), Route::SuffixRepair),
    ];
    let mut counts: BTreeMap<Route, usize> = BTreeMap::new();
    let mut expected: BTreeMap<Route, usize> = BTreeMap::new();
    let mut recs = Vec::new();
    for (rep, (name, first, route)) in scenarios.iter().cycle().take(12).enumerate() {
        let second = match route {
            Route::SuffixRepair => moves(&inst.oracle_plan[5..]),
            _ => full.clone(),
        };
        let backend = ScriptedBackend::queue([first.clone(), second]);
        let r = Runner::new(&backend, &NoCode, MethodConfig::new(Method::AdaptiveRepot)).run(&inst, rep as u64);
        ensure!(r.success, "{name}: adaptive run failed");
        if *route == Route::FreshRetryEmpty || *route == Route::FreshRetryShortPrefix {
            ensure!(r.llm_calls[1].prompt == r.llm_calls[0].prompt, "{name}: retry is not a fresh PoT prompt");
        }
        *expected.entry(*route).or_default() += 1;
        recs.push(r);
    }
    for hist in analysis::routing_histogram(&recs).map_err(|e| e.to_string())?.into_values() {
        for (r, n) in hist {
            *counts.entry(r).or_default() += n;
        }
    }
    ensure!(counts == expected, "routes {counts:?} != {expected:?}");
    Ok(format!("route counts {:?}", counts.iter().map(|(r, n)| format!("{}={n}", r.name())).collect::<Vec<_>>()))
}

fn checkpoint_aware(cases: &[DerailCase]) -> impl Fn(CallContext<'_>, &CompletionRequest) -> Result<String, String> {
    let cases: HashMap<String, DerailCase> = cases.iter().map(|c| (c.case_id.clone(), c.clone())).collect();
    let suite: HashMap<String, ProblemInstance> =
        mixed_suite().iter().map(|i| (i.problem_id.clone(), i.clone())).collect();
    move |call, req| {
        let (case_id, cond) = call.key.rsplit_once('/').ok_or("unkeyed call")?;
        let case = &cases[case_id];
        let inst = &suite[&case.problem_id];
        if !req.prompt.contains(&env::render_state(&case.checkpoint_state)) {
            return Ok(GARBAGE.into());
        }
        let plan: &[Action] = match cond.parse::<Condition>()? {
            Condition::RepotRestart => &inst.oracle_plan,
            _ => &inst.oracle_plan[case.checkpoint_index..],
        };
        Ok(moves(plan))
    }
}

fn c6_derail_separation() -> Check {
    let suite = mixed_suite();
    let set = derail::make_cases(suite, 1, 6, Some(100)).map_err(|e| e.to_string())?;
    ensure!(set.cases.len() == 100, "{} cases", set.cases.len());
    let conditions = [
        Condition::NoFeedback,
        Condition::ErrorOnly,
        Condition::StateFeedback,
        Condition::StatePlusLegalActions,
        Condition::RepotFull,
        Condition::RepotNoPrefix,
        Condition::RepotRestart,
    ];
    let backend = FnBackend::new(checkpoint_aware(&set.cases));
    let runner = Runner::new(&backend, &NoCode, MethodConfig::new(Method::Repot));
    let sink = MemorySink::default();
    let summary = derail::run_derail(&set.cases, suite, &conditions, &runner, 8, &sink, None).map_err(|e| e.to_string())?;
    let mut rates = Vec::new();
    for c in conditions {
        let n = summary.counts[&c];
        let want = if matches!(c, Condition::NoFeedback | Condition::ErrorOnly) { 0 } else { 100 };
        ensure!(n.total == 100 && n.successes == want, "{}: {}/{}", c.name(), n.successes, n.total);
        rates.push(format!("{}={}", c.name(), n.successes));
    }
    let by_case: HashMap<&str, &DerailCase> = set.cases.iter().map(|c| (c.case_id.as_str(), c)).collect();
    let mut seeds: HashMap<String, BTreeSet<(u64, String)>> = HashMap::new();
    for line in sink.lines.lock().unwrap().iter() {
        let r: RecoveryRecord = serde_json::from_value(line.clone()).map_err(|e| e.to_string())?;
        let case = by_case[r.case_id.as_str()];
        let expect = hex::encode(Sha256::digest(format!(
            "{}|{}|{}|{}",
            case.problem_id, case.checkpoint_index, case.injected_action, case.injection_seed
        )));
        ensure!(r.pairing_key == expect, "{} pairing key mismatch", r.case_id);
        seeds.entry(r.case_id).or_default().insert((r.injection_seed, r.pairing_key));
    }
    ensure!(seeds.len() == 100 && seeds.values().all(|s| s.len() == 1), "conditions disagree on injection seeds");
    Ok(format!("successes per 100: {}; seeds shared and hash-verified", rates.join(" ")))
}

fn c7_bootstrap() -> Check {
    let t = Instant::now();
    // Exhaustive equivalence at n = 3.
    let sample = PairedSample::from_pairs(vec![(true, false), (false, false), (true, true)]);
    let d = [1.0, 0.0, 0.0];
    let mut all = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                all.push(100.0 * (d[i] + d[j] + d[k]) / 3.0);
            }
        }
    }
    all.sort_by(|a: &f64, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| {
        let h = p * 26.0;
        let lo = h.floor() as usize;
        all[lo] + (h - lo as f64) * (all[(lo + 1).min(26)] - all[lo])
    };
    let ci = analysis::paired_bootstrap_ci(&sample, 10_000, 0.95, 0).map_err(|e| e.to_string())?;
    ensure!(ci.exhaustive && ci.resamples == 27, "not exhaustive");
    ensure!(ci.lo == q(0.025) && ci.hi == q(0.975), "bounds ({}, {}) != ({}, {})", ci.lo, ci.hi, q(0.025), q(0.975));

    // Coverage of a true 10pp gap at n = 500.
    let reps = 200;
    let mut covered = 0;
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + rep);
        let pairs = (0..500).map(|_| (rng.gen_bool(0.6), rng.gen_bool(0.5))).collect();
        let ci = analysis::paired_bootstrap_ci(&PairedSample::from_pairs(pairs), 2000, 0.95, rep)
            .map_err(|e| e.to_string())?;
        covered += usize::from(ci.lo <= 10.0 && 10.0 <= ci.hi);
    }
    let coverage = 100.0 * covered as f64 / reps as f64;
    let elapsed = t.elapsed();
    ensure!((93.0..=97.0).contains(&coverage), "coverage {coverage:.1}% outside [93, 97]");
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!("27-resample bounds exact; coverage {coverage:.1}% over {reps} reps in {:.1}s", elapsed.as_secs_f64()))
}

/// Runs repot and pot_retry over 100 problems with a script planting
/// (p, q, r, b, b') = (0.6, 0.2, 0.7, 0.3, 0.2).
fn c8_eq2_round_trip() -> Check {
    let suite = &mixed_suite()[..100];
    let by_id: HashMap<String, (usize, ProblemInstance)> =
        suite.iter().enumerate().map(|(i, x)| (x.problem_id.clone(), (i, x.clone()))).collect();
    let policy = move |method: Method| {
        let by_id = by_id.clone();
        move |call: CallContext<'_>, _: &CompletionRequest| -> Result<String, String> {
            let (i, inst) = &by_id[call.key];
            let j = inst.oracle_plan.len() / 2;
            let first = match i {
                0..60 => moves(&inst.oracle_plan),
                60..80 => moves(&corrupt(inst, j)),
                _ => GARBAGE.to_string(),
            };
            if call.ordinal == 0 {
                return Ok(first);
            }
            Ok(match method {
                // Repair from the boundary: 14 of the 20 recoverable failures.
                Method::Repot if (60..74).contains(i) => moves(&inst.oracle_plan[j..]),
                // Fresh retry: 8 of 20 recoverable, 4 of 20 empty.
                Method::PotRetry if (60..68).contains(i) || (80..84).contains(i) => moves(&inst.oracle_plan),
                _ => GARBAGE.to_string(),
            })
        }
    };
    let collect = |method: Method| -> Result<Vec<TraceRecord>, String> {
        let backend = FnBackend::new(policy(method));
        let runner = Runner::new(&backend, &NoCode, MethodConfig::new(method));
        let sink = MemorySink::default();
        runner::run_suite(suite, &runner, 8, &sink, 8).map_err(|e| e.to_string())?;
        let lines = sink.lines.lock().unwrap();
        Ok(lines.iter().map(|v| serde_json::from_value(v.clone()).unwrap()).collect())
    };
    let repot = collect(Method::Repot)?;
    let retry = collect(Method::PotRetry)?;
    let est = analysis::eq2_estimate(&repot, &retry).map_err(|e| e.to_string())?;
    let got = [est.p, est.q, est.r, est.b, est.b_prime].map(|r| (r.hits, r.total));
    ensure!(got == [(60, 100), (20, 100), (14, 20), (12, 40), (4, 20)], "estimates {got:?}");
    let (holds, margin) = est.exact_margin().ok_or("undefined estimate")?;
    ensure!(holds && margin == Ratio::new(3, 50), "exact margin {margin}");
    let (holds_f, m) = analysis::eq2_evaluate(&est.params().unwrap());
    ensure!(holds_f && (m - 0.06).abs() < 1e-12, "float margin {m}");
    Ok(format!("p=60/100 q=20/100 r=14/20 b=12/40 b'=4/20; margin {margin} > 0"))
}

fn pddl_text(name: &str, init: &BlocksState, goal: &[Fact]) -> String {
    let pred = |f: &Fact| match f {
        Fact::On(x, y) => format!("(on {x} {y})"),
        Fact::OnTable(x) => format!("(ontable {x})"),
        Fact::Clear(x) => format!("(clear {x})"),
        Fact::Holding(x) => format!("(holding {x})"),
        Fact::ArmEmpty => "(handempty)".to_string(),
    };
    let objects = init.block_names().join(" ");
    let init: Vec<String> = init.facts.iter().map(pred).collect();
    let goal: Vec<String> = goal.iter().map(pred).collect();
    format!(
        "(define (problem {name})\n  (:domain blocksworld-4ops)\n  (:objects {objects})\n  (:init {})\n  (:goal (and {})))\n",
        init.join(" "),
        goal.join(" ")
    )
}

fn c9_planbench() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let count = 20;
    for i in 0..count {
        let arm_empty = |rng: &mut ChaCha8Rng| loop {
            let s = random_blocks(rng, 4);
            if s.facts.contains(&Fact::ArmEmpty) {
                return s;
            }
        };
        let init = arm_empty(&mut rng);
        let target = arm_empty(&mut rng);
        let goal: Vec<Fact> = target.facts.iter().filter(|f| matches!(f, Fact::On(..))).cloned().collect();
        let goal = if goal.is_empty() { vec![Fact::OnTable("a".into())] } else { goal };
        fs::write(dir.path().join(format!("instance-{i:02}.pddl")), pddl_text(&format!("bw-{i}"), &init, &goal))
            .map_err(|e| e.to_string())?;
    }
    let loaded = planbench::load_planbench_split(dir.path()).map_err(|e| e.to_string())?;
    ensure!(loaded.len() == count, "parsed {} of {count}", loaded.len());
    for inst in loaded {
        let inst = planbench::attach_oracle(inst).map_err(|e| e.to_string())?;
        let out = replay::replay(inst.environment, &inst.initial_state, &inst.oracle_plan, &inst.goal).unwrap();
        ensure!(out.fully_valid() && out.goal_reached, "{} oracle fails", inst.problem_id);
    }

    let mut inverse_checked = 0;
    while inverse_checked < 1000 {
        let n = rng.gen_range(2..7);
        let state = EnvState::Blocks(random_blocks(&mut rng, n));
        for a in env::legal_actions(&state) {
            let back = match &a {
                Action::Blocks(BlockOp::PickUp(x)) => BlockOp::PutDown(x.clone()),
                Action::Blocks(BlockOp::Unstack(x, y)) => BlockOp::Stack(x.clone(), y.clone()),
                _ => continue,
            };
            let mid = env::step(&state, &a).unwrap();
            let end = env::step(&mid.next_state, &Action::Blocks(back)).unwrap();
            ensure!(end.valid && env::normalize(&end.next_state) == env::normalize(&state), "{a} has no inverse");
        }
        inverse_checked += 1;
    }

    let mut agree = 0;
    for _ in 0..10_000 {
        let n = rng.gen_range(2..7);
        let state = random_blocks(&mut rng, n);
        let es = EnvState::Blocks(state.clone());
        let pool = if rng.gen_bool(0.5) { env::legal_actions(&es) } else { env::action_universe(&es) };
        let a = &pool[rng.gen_range(0..pool.len())];
        let Action::Blocks(op) = a else { unreachable!() };
        let facts: BTreeSet<Fact> = state.facts.iter().cloned().collect();
        let r = env::step(&es, a).unwrap();
        let ours = match (&r.valid, r.next_state) {
            (true, EnvState::Blocks(s)) => Some(s.facts.into_iter().collect::<BTreeSet<_>>()),
            _ => None,
        };
        ensure!(ours == strips_apply(&facts, op), "{a} disagrees with the STRIPS evaluator in {state:?}");
        agree += 1;
    }
    Ok(format!("{count} PDDL problems solved; 1000 inverse states; {agree} STRIPS pairs agree"))
}

fn c10_trace_integrity() -> Check {
    let suite = &mixed_suite()[..60];
    let good: BTreeSet<String> = suite.iter().step_by(3).map(|i| i.problem_id.clone()).collect();
    let backend = FnBackend::new(mixed_policy(good));
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut file_records = Vec::new();
    let mut memory_records = Vec::new();
    for method in [Method::Pot, Method::Repot, Method::AdaptiveRepot] {
        let runner = Runner::new(&backend, &NoCode, MethodConfig::new(method));
        let path = dir.path().join(format!("{method}.jsonl"));
        let header = serde_json::json!({ "method": method, "seed": 5 });
        let sink = JsonlSink::create(&path, &header).map_err(|e| e.to_string())?;
        runner::run_suite(suite, &runner, 4, &sink, 5).map_err(|e| e.to_string())?;
        drop(sink);
        let mem = MemorySink::default();
        runner::run_suite(suite, &runner, 1, &mem, 5).map_err(|e| e.to_string())?;

        let raw = fs::read_to_string(&path).map_err(|e| e.to_string())?;
        ensure!(raw.lines().count() == suite.len() + 1, "{method}: {} lines", raw.lines().count());
        for line in raw.lines().skip(1) {
            let v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
            let keys: BTreeSet<&str> = v.as_object().ok_or("record is not an object")?.keys().map(String::as_str).collect();
            let documented: BTreeSet<&str> = TRACE_FIELDS.iter().copied().collect();
            ensure!(keys == documented, "{method}: field drift {:?}", keys.symmetric_difference(&documented).collect::<Vec<_>>());
        }
        let file = read_trace_file(&path)?;
        ensure!(file.header == Some(header), "{method}: header not preserved");
        let mut recs = file.records()?;
        for r in &recs {
            let back = serde_json::to_value(r).unwrap();
            ensure!(file.lines.contains(&back), "{}: record does not re-serialize identically", r.problem_id);
        }
        let mut mem_recs: Vec<TraceRecord> =
            mem.lines.lock().unwrap().iter().map(|v| serde_json::from_value(v.clone()).unwrap()).collect();
        recs.sort_by(|a, b| a.problem_id.cmp(&b.problem_id));
        mem_recs.sort_by(|a, b| a.problem_id.cmp(&b.problem_id));
        let strip = |v: &[TraceRecord]| v.iter().map(TraceRecord::without_timing).collect::<Vec<_>>();
        ensure!(strip(&recs) == strip(&mem_recs), "{method}: file records differ from a fresh run");
        file_records.extend(recs);
        memory_records.extend(mem_recs);
    }
    let from_file = analysis::success_table(&file_records);
    ensure!(from_file == analysis::success_table(&memory_records), "success tables differ");
    let cells = from_file.cells.len();
    Ok(format!("3 methods x {} records round-trip with zero field drift; success_table equal over {cells} cells", suite.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("oracle validity", c1_oracle_validity),
        ("replay correctness", c2_replay_correctness),
        ("algorithm end-to-end", c3_triple_separation),
        ("budget laws", c4_budget_laws),
        ("adaptive routing", c5_adaptive_routing),
        ("derail pairing and separation", c6_derail_separation),
        ("bootstrap validity", c7_bootstrap),
        ("recovery inequality round trip", c8_eq2_round_trip),
        ("planbench adapter", c9_planbench),
        ("trace integrity", c10_trace_integrity),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into())));
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {:>2} {name} [{secs:.1}s]: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name} [{secs:.1}s]: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
