mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use repot_core::analysis::{self, Table};
use repot_core::derail::{self, RecoveryRecord};
use repot_core::gateway::{ModelBackend, RemoteBackend, RemoteConfig, Sandbox, ScriptedBackend};
use repot_core::planbench;
use repot_core::runner::{self, read_trace_file, JsonlSink, Runner, TraceRecord};
use repot_core::zoo::{self, ProblemInstance, StratificationPlan};
use serde_json::json;

use config::{BackendKind, FileConfig, Overrides, Resolved};

#[derive(Parser)]
#[command(name = "repot", version, about = "Verifier-backed planning runs, recovery benchmark and trace analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one method on a problem suite.
    Run {
        #[command(flatten)]
        common: Overrides,
        /// cot, pot, sc, pot_retry, repot or adaptive_repot.
        #[arg(long)]
        method: Option<String>,
    },
    /// Inject one wrong action per case and score recovery per condition.
    Derail {
        #[command(flatten)]
        common: Overrides,
        /// Case file; read if it exists, otherwise generated and written here.
        #[arg(long)]
        cases: Option<PathBuf>,
        /// Comma-separated condition names (default: all).
        #[arg(long, value_delimiter = ',')]
        conditions: Vec<String>,
        #[arg(long)]
        per_problem: Option<usize>,
        /// Keep a seeded subsample of exactly this many cases.
        #[arg(long)]
        target: Option<usize>,
        /// Call budget of the stateguard controller.
        #[arg(long)]
        stateguard_calls: Option<usize>,
    },
    /// Reports over trace files.
    Judge {
        #[arg(long, value_enum)]
        kind: ReportKind,
        /// Trace files (the header line is optional).
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// First method of a comparison (default: method of the first file).
        #[arg(long)]
        a: Option<String>,
        /// Second method (default: method of the second file).
        #[arg(long)]
        b: Option<String>,
        #[arg(long, default_value_t = 10_000)]
        resamples: usize,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a stratified problem suite.
    Gen {
        /// Stratification plan (TOML); the default plan when omitted.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a directory of Blocksworld PDDL problems into a suite.
    PlanbenchImport {
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportKind {
    Headline,
    PerEnv,
    Cost,
    Derail,
    Eq2,
    Mechanism,
    Routing,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, method } => cmd_run(&common, method.as_deref()),
        Command::Derail { common, cases, conditions, per_problem, target, stateguard_calls } => {
            cmd_derail(&common, cases, &conditions, per_problem, target, stateguard_calls)
        }
        Command::Judge { kind, traces, csv, a, b, resamples, level, seed } => {
            let table = cmd_judge(kind, &traces, a, b, resamples, level, seed)?;
            print!("{table}");
            if let Some(path) = csv {
                std::fs::write(&path, table.to_csv()).with_context(|| format!("cannot write {}", path.display()))?;
            }
            Ok(())
        }
        Command::Gen { plan, seed, out } => {
            let plan = match plan {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("cannot read plan {}", p.display()))?;
                    toml::from_str(&text).with_context(|| format!("invalid plan {}", p.display()))?
                }
                None => StratificationPlan::default(),
            };
            let suite = zoo::generate_suite(&plan, seed)?;
            zoo::write_suite(&suite, &out)?;
            println!("wrote {} instances to {}", suite.len(), out.display());
            Ok(())
        }
        Command::PlanbenchImport { dir, out } => {
            let suite = planbench::load_planbench_split(&dir)?
                .into_iter()
                .map(|inst| {
                    let id = inst.problem_id.clone();
                    planbench::attach_oracle(inst).with_context(|| format!("{id} has no oracle plan"))
                })
                .collect::<Result<Vec<_>>>()?;
            zoo::write_suite(&suite, &out)?;
            println!("wrote {} instances to {}", suite.len(), out.display());
            Ok(())
        }
    }
}

fn load_suite(path: &Path) -> Result<Vec<ProblemInstance>> {
    if !path.exists() {
        bail!("suite file {} does not exist (create one with `repot gen`)", path.display());
    }
    Ok(zoo::read_suite(path)?)
}

fn backend(cfg: &Resolved) -> Result<Box<dyn ModelBackend>> {
    Ok(match cfg.backend {
        BackendKind::Scripted => {
            let path = cfg.script.as_deref().expect("checked during resolution");
            Box::new(ScriptedBackend::from_file(path).with_context(|| format!("cannot load script {}", path.display()))?)
        }
        BackendKind::Remote => {
            let mut rc = match &cfg.remote.endpoint {
                Some(endpoint) => {
                    let mut rc = RemoteConfig::new(endpoint.clone(), std::env::var("REPOT_MODEL").unwrap_or_default());
                    rc.api_key = std::env::var("REPOT_API_KEY").ok().filter(|k| !k.is_empty());
                    rc
                }
                None => RemoteConfig::from_env()
                    .map_err(anyhow::Error::msg)
                    .context("remote backend misconfigured (set REPOT_ENDPOINT or [remote] endpoint)")?,
            };
            if !cfg.model.is_empty() {
                rc.model = cfg.model.clone();
            }
            if rc.model.is_empty() {
                bail!("remote backend misconfigured: no model name (set REPOT_MODEL, `model` or --model)");
            }
            if let Some(n) = cfg.remote.max_attempts {
                rc.max_attempts = n.max(1);
            }
            if let Some(s) = cfg.remote.timeout_s {
                rc.timeout = Duration::from_secs(s);
            }
            Box::new(RemoteBackend::new(rc))
        }
    })
}

fn sandbox(cfg: &Resolved) -> Result<Sandbox> {
    Sandbox::new(cfg.sandbox.clone()).context("program-of-thought methods need a Python interpreter ([sandbox] interpreter)")
}

fn make_runner<'a>(cfg: &Resolved, backend: &'a dyn ModelBackend, executor: &'a Sandbox) -> Runner<'a> {
    let mut r = Runner::new(backend, executor, cfg.method.clone());
    r.request.temperature = cfg.temperature;
    r.request.max_output_tokens = cfg.max_output_tokens;
    r.request.reasoning_level = cfg.reasoning_level;
    r.request.model_name = cfg.model.clone();
    r
}

fn cmd_run(o: &Overrides, method: Option<&str>) -> Result<()> {
    let file = FileConfig::load(o.config.as_deref())?;
    let cfg = config::resolve(&file, o, method)?;
    let suite = load_suite(&cfg.suite)?;
    let backend = backend(&cfg)?;
    let executor = sandbox(&cfg)?;
    let runner = make_runner(&cfg, backend.as_ref(), &executor);
    let header = json!({ "command": "run", "config": cfg, "seed": cfg.seed, "version": env!("CARGO_PKG_VERSION") });
    let sink = JsonlSink::create(&cfg.out, &header).with_context(|| format!("cannot create {}", cfg.out.display()))?;
    let summary = runner::run_suite(&suite, &runner, cfg.parallel, &sink, cfg.seed)?;
    println!("method {} on {} instances -> {}", cfg.method.method, suite.len(), cfg.out.display());
    print!("{summary}");
    Ok(())
}

fn cmd_derail(
    o: &Overrides,
    cases_path: Option<PathBuf>,
    conditions: &[String],
    per_problem: Option<usize>,
    target: Option<usize>,
    stateguard_calls: Option<usize>,
) -> Result<()> {
    let file = FileConfig::load(o.config.as_deref())?;
    let cfg = config::resolve(&file, o, None)?;
    let d = &file.derail;
    let names = if conditions.is_empty() { d.conditions.clone().unwrap_or_default() } else { conditions.to_vec() };
    let conditions = config::parse_conditions(&names)?;
    let suite = load_suite(&cfg.suite)?;
    let cases_path = cases_path.or_else(|| d.cases.clone());
    let cases = match &cases_path {
        Some(p) if p.exists() => derail::read_cases(p)?,
        _ => {
            let set = derail::make_cases(
                &suite,
                per_problem.or(d.per_problem).unwrap_or(1),
                cfg.seed,
                target.or(d.target),
            )?;
            for (pid, reason) in &set.skipped {
                eprintln!("skipped {pid}: {reason}");
            }
            if let Some(p) = &cases_path {
                derail::write_cases(&set.cases, p)?;
            }
            set.cases
        }
    };
    let backend = backend(&cfg)?;
    let executor = sandbox(&cfg)?;
    let runner = make_runner(&cfg, backend.as_ref(), &executor);
    let stateguard_calls = stateguard_calls.or(d.stateguard_calls);
    let header = json!({
        "command": "derail",
        "config": cfg,
        "seed": cfg.seed,
        "cases": cases.len(),
        "conditions": conditions.iter().map(|c| c.name()).collect::<Vec<_>>(),
        "stateguard_calls": stateguard_calls,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let sink = JsonlSink::create(&cfg.out, &header).with_context(|| format!("cannot create {}", cfg.out.display()))?;
    let summary = derail::run_derail(&cases, &suite, &conditions, &runner, cfg.parallel, &sink, stateguard_calls)?;
    println!("{} cases x {} conditions -> {}", cases.len(), conditions.len(), cfg.out.display());
    print!("{summary}");
    Ok(())
}

fn load_records(paths: &[PathBuf]) -> Result<Vec<Vec<TraceRecord>>> {
    paths
        .iter()
        .map(|p| {
            let file = read_trace_file(p).map_err(anyhow::Error::msg)?;
            file.records().map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))
        })
        .collect()
}

fn by_method(all: &[TraceRecord], method: &str) -> Vec<TraceRecord> {
    all.iter().filter(|r| r.method == method).cloned().collect()
}

fn pick_pair(files: &[Vec<TraceRecord>], a: Option<String>, b: Option<String>) -> Result<(String, String)> {
    let first = |i: usize| files.get(i).and_then(|f| f.first()).map(|r| r.method.clone());
    let a = a.or_else(|| first(0)).context("cannot tell the first method (pass --a)")?;
    let b = b.or_else(|| first(1)).context("cannot tell the second method (pass --b or a second trace file)")?;
    if a == b {
        bail!("a comparison needs two different methods, got '{a}' twice");
    }
    Ok((a, b))
}

fn cmd_judge(
    kind: ReportKind,
    paths: &[PathBuf],
    a: Option<String>,
    b: Option<String>,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<Table> {
    if kind == ReportKind::Derail {
        let mut recs = Vec::new();
        for p in paths {
            let file = read_trace_file(p).map_err(anyhow::Error::msg)?;
            for (i, v) in file.lines.into_iter().enumerate() {
                let r: RecoveryRecord =
                    serde_json::from_value(v).with_context(|| format!("{} record {}", p.display(), i + 1))?;
                recs.push(r);
            }
        }
        return Ok(analysis::derail_table(&recs));
    }
    let files = load_records(paths)?;
    let all: Vec<TraceRecord> = files.iter().flatten().cloned().collect();
    Ok(match kind {
        ReportKind::Headline => {
            let (a, b) = pick_pair(&files, a, b)?;
            let rows = analysis::headline(&by_method(&all, &a), &by_method(&all, &b), resamples, level, seed)?;
            analysis::headline_table(&rows, &a, &b)
        }
        ReportKind::PerEnv => {
            let table = analysis::success_table(&all);
            match pick_pair(&files, a, b) {
                Ok((a, b)) => analysis::env_delta_table(&table, &a, &b),
                Err(_) => table.to_table(),
            }
        }
        ReportKind::Cost => analysis::cost_table(&analysis::cost_decomposition(&all)),
        ReportKind::Eq2 => {
            let est = analysis::eq2_estimate(&by_method(&all, "repot"), &by_method(&all, "pot_retry"))?;
            let mut t = Table::new(["quantity", "hits", "total", "value"]);
            for (name, r) in [("p", est.p), ("q", est.q), ("r", est.r), ("b", est.b), ("b'", est.b_prime)] {
                t.push([name.to_string(), r.hits.to_string(), r.total.to_string(), r.value().map_or("-".into(), |v| format!("{v:.4}"))]);
            }
            match est.exact_margin() {
                Some((holds, m)) => {
                    t.push(["margin".to_string(), String::new(), String::new(), format!("{m} ({:.4})", *m.numer() as f64 / *m.denom() as f64)]);
                    t.push(["repair_wins".to_string(), String::new(), String::new(), holds.to_string()]);
                }
                None => t.push(["margin".to_string(), String::new(), String::new(), "-".to_string()]),
            }
            t
        }
        ReportKind::Mechanism => {
            analysis::mechanism_table(&analysis::paired_mechanism_subset(&by_method(&all, "pot_retry"), &by_method(&all, "repot"))?)
        }
        ReportKind::Routing => analysis::routing_table(&analysis::routing_histogram(&by_method(&all, "adaptive_repot"))?),
        ReportKind::Derail => unreachable!("handled above"),
    })
}
