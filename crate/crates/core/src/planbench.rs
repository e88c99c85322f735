//! Blocksworld PDDL problem files mapped onto the native environment.
//!
//! Accepted fragment:
//!
//! ```text
//! problem  := "(" "define" "(" "problem" NAME ")" section* ")"
//! section  := "(" ":domain" NAME ")"
//!           | "(" ":objects" (NAME+ ("-" TYPE)?)* ")"
//!           | "(" ":init" atom* ")"
//!           | "(" ":goal" (atom | "(" "and" atom* ")") ")"
//! atom     := "(" PRED NAME* ")"
//! PRED     := on | on-table | ontable | clear | holding | arm-empty | handempty
//! ```
//!
//! Matching is case-insensitive; block names are lowercased. `;` starts a
//! comment that runs to end of line.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::env::{BlocksState, EnvState, Fact, GoalSpec};
use crate::oracle;
use crate::zoo::ProblemInstance;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PddlError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown predicate '{0}'")]
    UnknownPredicate(String),
    #[error("inconsistent initial state: {0}")]
    Invariant(String),
    #[error("goal mentions undeclared block '{0}'")]
    UnknownBlock(String),
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{} file(s) failed to load: {}", .failures.len(), .failures.iter().map(|(p, e)| format!("{p}: {e}")).collect::<Vec<_>>().join("; "))]
    Files { failures: Vec<(String, String)> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for line in text.lines() {
        let line = line.split(';').next().unwrap_or("");
        let spaced = line.replace('(', " ( ").replace(')', " ) ");
        tokens.extend(spaced.split_whitespace().map(str::to_string));
    }
    tokens
}

fn parse_sexp(tokens: &[String], pos: &mut usize) -> Result<Sexp, PddlError> {
    let tok = tokens
        .get(*pos)
        .ok_or_else(|| PddlError::Syntax("unexpected end of input".into()))?;
    *pos += 1;
    match tok.as_str() {
        "(" => {
            let mut items = Vec::new();
            loop {
                match tokens.get(*pos).map(String::as_str) {
                    Some(")") => {
                        *pos += 1;
                        return Ok(Sexp::List(items));
                    }
                    Some(_) => items.push(parse_sexp(tokens, pos)?),
                    None => return Err(PddlError::Syntax("unbalanced parentheses".into())),
                }
            }
        }
        ")" => Err(PddlError::Syntax("unexpected ')'".into())),
        atom => Ok(Sexp::Atom(atom.to_ascii_lowercase())),
    }
}

fn atom_of(s: &Sexp) -> Option<&str> {
    match s {
        Sexp::Atom(a) => Some(a),
        Sexp::List(_) => None,
    }
}

fn to_fact(s: &Sexp) -> Result<Fact, PddlError> {
    let Sexp::List(items) = s else {
        return Err(PddlError::Syntax("expected a predicate in parentheses".into()));
    };
    let names: Vec<&str> = items
        .iter()
        .map(|i| atom_of(i).ok_or_else(|| PddlError::Syntax("nested list inside a predicate".into())))
        .collect::<Result<_, _>>()?;
    let Some((&pred, args)) = names.split_first() else {
        return Err(PddlError::Syntax("empty predicate".into()));
    };
    let want = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(PddlError::Syntax(format!("predicate {pred} takes {n} argument(s), got {}", args.len())))
        }
    };
    match pred {
        "on" => want(2).map(|_| Fact::On(args[0].into(), args[1].into())),
        "on-table" | "ontable" => want(1).map(|_| Fact::OnTable(args[0].into())),
        "clear" => want(1).map(|_| Fact::Clear(args[0].into())),
        "holding" => want(1).map(|_| Fact::Holding(args[0].into())),
        "arm-empty" | "handempty" => want(0).map(|_| Fact::ArmEmpty),
        other => Err(PddlError::UnknownPredicate(other.to_string())),
    }
}

/// Parsed problem before conversion to an instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PddlProblem {
    pub name: String,
    pub objects: Vec<String>,
    pub init: Vec<Fact>,
    pub goal: Vec<Fact>,
}

pub fn parse_pddl(text: &str) -> Result<PddlProblem, PddlError> {
    let tokens = tokenize(text);
    let mut pos = 0;
    let root = parse_sexp(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(PddlError::Syntax("trailing input after problem".into()));
    }
    let Sexp::List(items) = root else {
        return Err(PddlError::Syntax("problem must be a list".into()));
    };
    if items.first().and_then(atom_of) != Some("define") {
        return Err(PddlError::Syntax("expected (define ...)".into()));
    }
    let mut problem = PddlProblem { name: String::new(), objects: Vec::new(), init: Vec::new(), goal: Vec::new() };
    for section in &items[1..] {
        let Sexp::List(parts) = section else {
            return Err(PddlError::Syntax("expected a section list".into()));
        };
        let head = parts.first().and_then(atom_of).unwrap_or("");
        match head {
            "problem" => problem.name = parts.get(1).and_then(atom_of).unwrap_or("").to_string(),
            ":domain" | ":requirements" => {}
            ":objects" => {
                let mut skip_type = false;
                for p in &parts[1..] {
                    let a = atom_of(p).ok_or_else(|| PddlError::Syntax("bad :objects entry".into()))?;
                    if skip_type {
                        skip_type = false;
                    } else if a == "-" {
                        skip_type = true;
                    } else {
                        problem.objects.push(a.to_string());
                    }
                }
            }
            ":init" => {
                for p in &parts[1..] {
                    problem.init.push(to_fact(p)?);
                }
            }
            ":goal" => {
                let body = parts.get(1).ok_or_else(|| PddlError::Syntax("empty :goal".into()))?;
                match body {
                    Sexp::List(g) if g.first().and_then(atom_of) == Some("and") => {
                        for p in &g[1..] {
                            problem.goal.push(to_fact(p)?);
                        }
                    }
                    other => problem.goal.push(to_fact(other)?),
                }
            }
            other => return Err(PddlError::Syntax(format!("unsupported section '{other}'"))),
        }
    }
    Ok(problem)
}

/// Parses a problem file into a Blocksworld instance with an empty oracle plan.
pub fn parse_pddl_problem(text: &str, problem_id: &str) -> Result<ProblemInstance, PddlError> {
    let problem = parse_pddl(text)?;
    let state = BlocksState { facts: problem.init.clone() }.normalized();
    state.check().map_err(PddlError::Invariant)?;
    let names = state.block_names();
    for obj in &problem.objects {
        if !names.contains(obj) {
            return Err(PddlError::Invariant(format!("block {obj} has no position in :init")));
        }
    }
    for f in &problem.goal {
        let mentioned: Vec<&String> = match f {
            Fact::On(x, y) => vec![x, y],
            Fact::OnTable(x) | Fact::Clear(x) | Fact::Holding(x) => vec![x],
            Fact::ArmEmpty => vec![],
        };
        if let Some(b) = mentioned.into_iter().find(|b| !names.contains(b)) {
            return Err(PddlError::UnknownBlock(b.clone()));
        }
    }
    let mut inst = ProblemInstance::new(
        problem_id.to_string(),
        EnvState::Blocks(state),
        GoalSpec::Facts(problem.goal),
        Vec::new(),
        0,
    );
    inst.extra.insert("source".into(), "pddl".into());
    if !problem.name.is_empty() {
        inst.extra.insert("pddl_problem".into(), problem.name.into());
    }
    Ok(inst)
}

/// Fills in the oracle plan of an imported instance.
pub fn attach_oracle(mut inst: ProblemInstance) -> Result<ProblemInstance, oracle::SolveError> {
    let plan = oracle::solve(&inst.initial_state, &inst.goal)?;
    inst.oracle_plan_length = plan.len();
    inst.oracle_plan = plan;
    Ok(inst)
}

/// Loads every `*.pddl` file in `dir`, ordered by file name.
pub fn load_planbench_split(dir: &Path) -> Result<Vec<ProblemInstance>, LoadError> {
    let io = |source| LoadError::Io { path: dir.display().to_string(), source };
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(io)?
        .collect::<Result<Vec<_>, _>>()
        .map_err(io)?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pddl")))
        .collect();
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    let mut out = Vec::new();
    let mut failures = Vec::new();
    for path in paths {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let loaded = fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|text| parse_pddl_problem(&text, &format!("planbench-{stem}")).map_err(|e| e.to_string()));
        match loaded {
            Ok(inst) => out.push(inst),
            Err(e) => failures.push((path.display().to_string(), e)),
        }
    }
    if failures.is_empty() {
        tracing::info!(count = out.len(), dir = %dir.display(), "loaded PDDL problems");
        Ok(out)
    } else {
        Err(LoadError::Files { failures })
    }
}
