use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{Runner, TraceRecord};
use crate::env::EnvId;
use crate::zoo::ProblemInstance;

/// Key of the object on a trace file's first line.
pub const HEADER_KEY: &str = "trace_header";

pub trait TraceSink: Send + Sync {
    fn append(&self, line: &Value) -> io::Result<()>;
}

/// Appends JSON lines to a file, flushing after each one.
pub struct JsonlSink {
    out: Mutex<BufWriter<File>>,
}

impl JsonlSink {
    /// Creates `path` and writes `{"trace_header": header}` as its first line.
    pub fn create(path: &Path, header: &Value) -> io::Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, &serde_json::json!({ HEADER_KEY: header }))?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(Self { out: Mutex::new(out) })
    }
}

impl TraceSink for JsonlSink {
    fn append(&self, line: &Value) -> io::Result<()> {
        let mut out = self.out.lock().map_err(|_| io::Error::other("trace sink poisoned"))?;
        serde_json::to_writer(&mut *out, line)?;
        out.write_all(b"\n")?;
        out.flush()
    }
}

#[derive(Default)]
pub struct MemorySink {
    pub lines: Mutex<Vec<Value>>,
}

impl TraceSink for MemorySink {
    fn append(&self, line: &Value) -> io::Result<()> {
        self.lines.lock().map_err(|_| io::Error::other("trace sink poisoned"))?.push(line.clone());
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("trace sink write failed: {0}")]
    Sink(io::Error),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Config(#[from] super::ConfigError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCount {
    pub successes: usize,
    pub total: usize,
}

/// Success counts per (environment, complexity).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SuiteSummary {
    pub cells: BTreeMap<(EnvId, usize), CellCount>,
}

impl SuiteSummary {
    pub fn add(&mut self, env: EnvId, complexity: usize, success: bool) {
        let c = self.cells.entry((env, complexity)).or_default();
        c.total += 1;
        c.successes += usize::from(success);
    }

    pub fn totals(&self) -> CellCount {
        self.cells.values().fold(CellCount::default(), |a, c| CellCount {
            successes: a.successes + c.successes,
            total: a.total + c.total,
        })
    }
}

impl fmt::Display for SuiteSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>10} {:>9} {:>7} {:>8}", "environment", "complexity", "successes", "total", "rate%")?;
        for ((env, c), n) in &self.cells {
            let rate = 100.0 * n.successes as f64 / n.total as f64;
            writeln!(f, "{:<12} {:>10} {:>9} {:>7} {:>8.1}", env.name(), c, n.successes, n.total, rate)?;
        }
        let t = self.totals();
        if t.total > 0 {
            let rate = 100.0 * t.successes as f64 / t.total as f64;
            writeln!(f, "{:<12} {:>10} {:>9} {:>7} {:>8.1}", "all", "", t.successes, t.total, rate)?;
        }
        Ok(())
    }
}

/// Runs every instance and appends one record each to `sink`. A failed
/// write stops the run; instances not yet started are skipped.
pub fn run_suite(
    instances: &[ProblemInstance],
    runner: &Runner<'_>,
    parallelism: usize,
    sink: &dyn TraceSink,
    run_seed: u64,
) -> Result<SuiteSummary, RunError> {
    runner.config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let aborted = AtomicBool::new(false);
    let failure: Mutex<Option<io::Error>> = Mutex::new(None);
    let results: Vec<Option<(EnvId, usize, bool)>> = pool.install(|| {
        instances
            .par_iter()
            .map(|inst| {
                if aborted.load(Ordering::SeqCst) {
                    return None;
                }
                let rec = runner.run(inst, run_seed);
                let line = serde_json::to_value(&rec).expect("trace records serialize");
                if let Err(e) = sink.append(&line) {
                    aborted.store(true, Ordering::SeqCst);
                    failure.lock().expect("failure slot poisoned").get_or_insert(e);
                    return None;
                }
                Some((rec.environment, rec.complexity, rec.success))
            })
            .collect()
    });
    if let Some(e) = failure.into_inner().expect("failure slot poisoned") {
        return Err(RunError::Sink(e));
    }
    let mut summary = SuiteSummary::default();
    for (env, c, ok) in results.into_iter().flatten() {
        summary.add(env, c, ok);
    }
    Ok(summary)
}

/// A trace file split into its header and record lines.
#[derive(Debug, Clone, Default)]
pub struct TraceFile {
    pub header: Option<Value>,
    pub lines: Vec<Value>,
}

impl TraceFile {
    pub fn records(&self) -> Result<Vec<TraceRecord>, String> {
        self.lines
            .iter()
            .enumerate()
            .map(|(i, v)| serde_json::from_value(v.clone()).map_err(|e| format!("record {}: {e}", i + 1)))
            .collect()
    }
}

pub fn read_trace_file(path: &Path) -> Result<TraceFile, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut file = TraceFile::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value =
            serde_json::from_str(line).map_err(|e| format!("{} line {}: {e}", path.display(), i + 1))?;
        match v.get(HEADER_KEY) {
            Some(h) if i == 0 => file.header = Some(h.clone()),
            _ => file.lines.push(v),
        }
    }
    Ok(file)
}
