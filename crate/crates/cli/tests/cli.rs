use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn repot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repot")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn lines(path: &Path) -> Vec<Value> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

const PLAN: &str = r#"
[[strata]]
environment = "hanoi"
complexities = [3, 4]
per_complexity = 2

[[strata]]
environment = "blocksworld"
complexities = [4]
per_complexity = 2
"#;

/// Writes a small suite and a script answering every problem with its oracle
/// plan (or garbage), returning (suite, script).
fn fixture(dir: &Path, correct: bool) -> (String, String) {
    let plan = dir.join("plan.toml");
    fs::write(&plan, PLAN).unwrap();
    let suite = dir.join("suite.jsonl");
    let o = repot(&["gen", "--plan", plan.to_str().unwrap(), "--seed", "3", "--out", suite.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut script = String::new();
    for inst in lines(&suite) {
        let text = if correct {
            let moves: Vec<&str> = inst["oracle_plan"].as_array().unwrap().iter().map(|a| a.as_str().unwrap()).collect();
            format!("moves = [{}]", moves.join(", "))
        } else {
            "no idea".to_string()
        };
        for _ in 0..2 {
            script.push_str(&json!({ "key": inst["problem_id"], "text": text }).to_string());
            script.push('\n');
        }
    }
    let name = if correct { "good.jsonl" } else { "bad.jsonl" };
    fs::write(dir.join(name), script).unwrap();
    (suite.to_str().unwrap().into(), dir.join(name).to_str().unwrap().into())
}

#[test]
fn gen_default_plan_writes_775_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("zoo.jsonl");
    let o = repot(&["gen", "--seed", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 775);
}

#[test]
fn scripted_run_writes_header_and_records() {
    let dir = tempfile::tempdir().unwrap();
    let (suite, script) = fixture(dir.path(), true);
    let out = dir.path().join("repot.jsonl");
    let o = repot(&[
        "run", "--method", "repot", "--suite", &suite, "--out", out.to_str().unwrap(), "--backend", "scripted",
        "--script", &script, "--parallel", "3", "--seed", "9",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("all"));
    let l = lines(&out);
    assert_eq!(l.len(), 7);
    let h = &l[0]["trace_header"];
    assert_eq!(h["seed"], 9);
    assert_eq!(h["config"]["temperature"], 0.0);
    assert_eq!(h["config"]["max_output_tokens"], 16384);
    assert_eq!(h["config"]["method"]["R"], 1);
    assert_eq!(h["config"]["method"]["T"], 4);
    assert!(l[1..].iter().all(|r| r["success"] == true && r["method"] == "repot"));
}

#[test]
fn config_file_values_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let (suite, script) = fixture(dir.path(), false);
    let out = dir.path().join("sc.jsonl");
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "suite = {suite:?}\nscript = {script:?}\nmethod = \"pot_retry\"\nout = \"ignored.jsonl\"\nR = 2\nT = 3\nk = 5\ntemperature = 0.7\nreasoning_level = \"medium\"\nphi_threshold = 0.2\nmodel = \"fixture\"\n"
        ),
    )
    .unwrap();
    let o = repot(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let l = lines(&out);
    let c = &l[0]["trace_header"]["config"];
    assert_eq!((c["method"]["R"].as_u64(), c["method"]["T"].as_u64(), c["method"]["k"].as_u64()), (Some(2), Some(3), Some(5)));
    assert_eq!(c["temperature"], 0.7);
    assert_eq!(c["reasoning_level"], "medium");
    assert_eq!(c["method"]["phi_threshold"], 0.2);
    assert!(l[1..].iter().all(|r| r["method"] == "pot_retry" && r["model"] == "fixture" && r["success"] == false));

    fs::write(dir.path().join("bad.toml"), "temprature = 0.1\n").unwrap();
    let o = repot(&["run", "--config", dir.path().join("bad.toml").to_str().unwrap(), "--suite", &suite]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("temprature"));
}

#[test]
fn unknown_method_lists_valid_methods() {
    let dir = tempfile::tempdir().unwrap();
    let (suite, script) = fixture(dir.path(), true);
    let o = repot(&["run", "--method", "tot", "--suite", &suite, "--out", "x.jsonl", "--script", &script]);
    assert!(!o.status.success());
    let err = stderr(&o);
    for m in ["cot", "pot", "sc", "pot_retry", "repot", "adaptive_repot"] {
        assert!(err.contains(m), "{err}");
    }
}

#[test]
fn missing_suite_and_script_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (_, script) = fixture(dir.path(), true);
    let o = repot(&["run", "--suite", "/nonexistent/suite.jsonl", "--out", "x.jsonl", "--script", &script]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("does not exist"));
    let o = repot(&["run", "--suite", "s.jsonl", "--out", "x.jsonl", "--backend", "scripted"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--script"));
}

#[test]
fn remote_backend_without_endpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (suite, _) = fixture(dir.path(), true);
    let o = Command::new(env!("CARGO_BIN_EXE_repot"))
        .args(["run", "--suite", &suite, "--out", "x.jsonl", "--backend", "remote"])
        .env_remove("REPOT_ENDPOINT")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("REPOT_ENDPOINT"));
}

#[test]
fn judge_reports_over_run_traces() {
    let dir = tempfile::tempdir().unwrap();
    let (suite, good) = fixture(dir.path(), true);
    let bad = dir.path().join("bad.jsonl");
    fixture(dir.path(), false);
    let repot_out = dir.path().join("repot.jsonl");
    let pot_out = dir.path().join("pot.jsonl");
    for (method, script, out) in [("repot", good.as_str(), &repot_out), ("pot", bad.to_str().unwrap(), &pot_out)] {
        let o = repot(&["run", "--method", method, "--suite", &suite, "--out", out.to_str().unwrap(), "--script", script]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let csv = dir.path().join("headline.csv");
    let o = repot(&[
        "judge", "--kind", "headline", repot_out.to_str().unwrap(), pot_out.to_str().unwrap(), "--resamples", "2000",
        "--csv", csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("repot%") && text.contains("pot%") && text.contains("+100.0"), "{text}");
    let csv = fs::read_to_string(csv).unwrap();
    assert!(csv.starts_with("model,n,repot%,pot%,delta_pp,ci_lo,ci_hi\n"));
    assert!(csv.contains("scripted,6,100.0,0.0,+100.0,+100.0,+100.0"));

    let o = repot(&["judge", "--kind", "per-env", repot_out.to_str().unwrap(), pot_out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("blocksworld") && stdout(&o).contains("+100.0"));
    let o = repot(&["judge", "--kind", "per-env", repot_out.to_str().unwrap()]);
    assert!(stdout(&o).contains("complexity"));
    let o = repot(&["judge", "--kind", "cost", repot_out.to_str().unwrap(), pot_out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("mean_calls"));
    let o = repot(&["judge", "--kind", "routing", repot_out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn derail_over_empty_case_file() {
    let dir = tempfile::tempdir().unwrap();
    let (suite, script) = fixture(dir.path(), true);
    let cases = dir.path().join("cases.jsonl");
    fs::write(&cases, "").unwrap();
    let out = dir.path().join("derail.jsonl");
    let o = repot(&[
        "derail", "--suite", &suite, "--cases", cases.to_str().unwrap(), "--out", out.to_str().unwrap(), "--script", &script,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("0 cases"));
    assert_eq!(lines(&out).len(), 1);
    let o = repot(&["judge", "--kind", "derail", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn derail_generates_cases_and_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (suite, script) = fixture(dir.path(), false);
    let cases = dir.path().join("cases.jsonl");
    let out = dir.path().join("derail.jsonl");
    let o = repot(&[
        "derail", "--suite", &suite, "--cases", cases.to_str().unwrap(), "--out", out.to_str().unwrap(), "--script", &script,
        "--conditions", "no_feedback,repot_full", "--target", "4",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&cases).unwrap().lines().count(), 4);
    assert_eq!(lines(&out).len(), 1 + 8);
    let o = repot(&["judge", "--kind", "derail", out.to_str().unwrap()]);
    assert!(stdout(&o).contains("repot_full") && stdout(&o).contains("no_feedback"));
    let o = repot(&["derail", "--suite", &suite, "--out", "y.jsonl", "--script", &script, "--conditions", "telepathy"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("state_feedback"));
}

const PDDL: &str = "(define (problem bw-4)
  (:domain blocksworld-4ops)
  (:objects a b c d)
  (:init (handempty) (ontable a) (on b a) (clear b) (ontable c) (on d c) (clear d))
  (:goal (and (on a b) (on c d))))
";

#[test]
fn planbench_import_writes_a_suite() {
    let dir = tempfile::tempdir().unwrap();
    let split = dir.path().join("split");
    fs::create_dir(&split).unwrap();
    fs::write(split.join("instance-1.pddl"), PDDL).unwrap();
    let out = dir.path().join("pb.jsonl");
    let o = repot(&["planbench-import", split.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let l = lines(&out);
    assert_eq!(l.len(), 1);
    assert_eq!(l[0]["problem_id"], "planbench-instance-1");
    assert!(l[0]["oracle_plan_length"].as_u64().unwrap() > 0);
}
