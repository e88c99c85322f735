//! Statistics over trace records. Every function here is pure: traces are
//! read, never modified.

mod bootstrap;
mod eq2;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::derail::{Condition, RecoveryRecord};
use crate::env::EnvId;
use crate::gateway::TokenSource;
use crate::runner::{Route, TraceRecord};

pub use bootstrap::{paired_bootstrap_ci, quantile_sorted, BootstrapCi, PairedSample};
pub use eq2::{eq2_estimate, eq2_evaluate, eq2_evaluate_exact, eq2_margin, Eq2Estimate, Rate, RecoveryParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("misaligned paired sample: {0}")]
    Alignment(String),
    #[error("{0}")]
    Invalid(String),
    #[error("regression needs at least two cells with distinct x (have {0})")]
    Underdetermined(usize),
    #[error("unknown route label '{0}'")]
    UnknownRoute(String),
}

/// Rows of text cells with a header, printable as aligned text or CSV.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self { headers: headers.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        self.rows.push(row.into_iter().map(Into::into).collect());
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        for r in &self.rows {
            for (i, c) in r.iter().enumerate() {
                if i < widths.len() {
                    widths[i] = widths[i].max(c.chars().count());
                }
            }
        }
        let line = |cells: &[String]| -> String {
            cells
                .iter()
                .enumerate()
                .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
                .collect::<Vec<_>>()
                .join("  ")
        };
        writeln!(f, "{}", line(&self.headers))?;
        writeln!(f, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "))?;
        for r in &self.rows {
            writeln!(f, "{}", line(r))?;
        }
        Ok(())
    }
}

/// `12.3`, or `-` for an undefined value.
pub fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Count {
    pub successes: usize,
    pub total: usize,
}

impl Count {
    /// Percentage, undefined for an empty cell.
    pub fn rate(&self) -> Option<f64> {
        (self.total > 0).then(|| 100.0 * self.successes as f64 / self.total as f64)
    }

    fn add(&mut self, success: bool) {
        self.total += 1;
        self.successes += usize::from(success);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CellKey {
    pub model: String,
    pub method: String,
    pub environment: EnvId,
    pub complexity: usize,
}

/// Success counts per (model, method, environment, complexity). Records with
/// a runner exception count as failures.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SuccessTable {
    pub cells: BTreeMap<CellKey, Count>,
}

pub fn success_table(records: &[TraceRecord]) -> SuccessTable {
    let mut t = SuccessTable::default();
    for r in records {
        let key = CellKey {
            model: r.model.clone(),
            method: r.method.clone(),
            environment: r.environment,
            complexity: r.complexity,
        };
        t.cells.entry(key).or_default().add(r.success && r.runner_exception.is_none());
    }
    t
}

impl SuccessTable {
    pub fn by_method(&self) -> BTreeMap<(String, String), Count> {
        let mut out: BTreeMap<(String, String), Count> = BTreeMap::new();
        for (k, c) in &self.cells {
            let e = out.entry((k.model.clone(), k.method.clone())).or_default();
            e.successes += c.successes;
            e.total += c.total;
        }
        out
    }

    pub fn by_env(&self) -> BTreeMap<(String, String, EnvId), Count> {
        let mut out: BTreeMap<(String, String, EnvId), Count> = BTreeMap::new();
        for (k, c) in &self.cells {
            let e = out.entry((k.model.clone(), k.method.clone(), k.environment)).or_default();
            e.successes += c.successes;
            e.total += c.total;
        }
        out
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["model", "method", "environment", "complexity", "successes", "total", "rate%"]);
        for (k, c) in &self.cells {
            t.push([
                k.model.clone(),
                k.method.clone(),
                k.environment.name().to_string(),
                k.complexity.to_string(),
                c.successes.to_string(),
                c.total.to_string(),
                pct(c.rate()),
            ]);
        }
        t
    }
}

/// `rate(a) - rate(b)` in points per (model, environment), where both
/// methods have records.
pub fn env_deltas(table: &SuccessTable, method_a: &str, method_b: &str) -> BTreeMap<(String, EnvId), f64> {
    let by_env = table.by_env();
    let mut out = BTreeMap::new();
    for ((model, method, env), ca) in &by_env {
        if method != method_a {
            continue;
        }
        if let Some(cb) = by_env.get(&(model.clone(), method_b.to_string(), *env)) {
            if let (Some(a), Some(b)) = (ca.rate(), cb.rate()) {
                out.insert((model.clone(), *env), a - b);
            }
        }
    }
    out
}

pub fn env_delta_table(table: &SuccessTable, method_a: &str, method_b: &str) -> Table {
    let by_env = table.by_env();
    let mut t = Table::new([
        "model".to_string(),
        "environment".to_string(),
        format!("{method_a}%"),
        format!("{method_b}%"),
        "delta_pp".to_string(),
    ]);
    for ((model, env), d) in env_deltas(table, method_a, method_b) {
        let a = by_env[&(model.clone(), method_a.to_string(), env)].rate();
        let b = by_env[&(model.clone(), method_b.to_string(), env)].rate();
        t.push([model, env.name().to_string(), pct(a), pct(b), format!("{d:+.1}")]);
    }
    t
}

/// One headline row: two methods on the same problems with a paired CI.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeadlineRow {
    pub model: String,
    pub n: usize,
    pub rate_a: f64,
    pub rate_b: f64,
    pub ci: BootstrapCi,
}

pub fn headline(
    a: &[TraceRecord],
    b: &[TraceRecord],
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<Vec<HeadlineRow>, AnalysisError> {
    let models = |rs: &[TraceRecord]| rs.iter().map(|r| r.model.clone()).collect::<std::collections::BTreeSet<_>>();
    let mut rows = Vec::new();
    for model in models(a).union(&models(b)) {
        let pick = |rs: &[TraceRecord]| rs.iter().filter(|r| &r.model == model).cloned().collect::<Vec<_>>();
        let (ra, rb) = (pick(a), pick(b));
        let sample = PairedSample::align(&ra, &rb)?;
        let ci = paired_bootstrap_ci(&sample, resamples, level, seed)?;
        let n = sample.len();
        let rate = |f: fn(&(bool, bool)) -> bool| 100.0 * sample.pairs.iter().filter(|p| f(p)).count() as f64 / n as f64;
        rows.push(HeadlineRow { model: model.clone(), n, rate_a: rate(|p| p.0), rate_b: rate(|p| p.1), ci });
    }
    Ok(rows)
}

pub fn headline_table(rows: &[HeadlineRow], method_a: &str, method_b: &str) -> Table {
    let mut t = Table::new([
        "model".to_string(),
        "n".to_string(),
        format!("{method_a}%"),
        format!("{method_b}%"),
        "delta_pp".to_string(),
        "ci_lo".to_string(),
        "ci_hi".to_string(),
    ]);
    for r in rows {
        t.push([
            r.model.clone(),
            r.n.to_string(),
            format!("{:.1}", r.rate_a),
            format!("{:.1}", r.rate_b),
            format!("{:+.1}", r.ci.delta),
            format!("{:+.1}", r.ci.lo),
            format!("{:+.1}", r.ci.hi),
        ]);
    }
    t
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    pub model: String,
    pub method: String,
    pub n: usize,
    pub mean_tokens_in: f64,
    pub median_tokens_in: f64,
    pub mean_tokens_out: f64,
    pub median_tokens_out: f64,
    pub mean_calls: f64,
    pub mean_wall_ms: f64,
    /// `provider`, `proxy` or `mixed`.
    pub token_source: String,
}

/// Per-(model, method) cost. Tokens are summed over a problem's calls first.
pub fn cost_decomposition(records: &[TraceRecord]) -> Vec<CostRow> {
    let mut groups: BTreeMap<(String, String), Vec<&TraceRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.model.clone(), r.method.clone())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((model, method), rs)| {
            let tin: Vec<f64> = rs.iter().map(|r| r.prompt_tokens() as f64).collect();
            let tout: Vec<f64> = rs.iter().map(|r| r.completion_tokens() as f64).collect();
            let calls: Vec<f64> = rs.iter().map(|r| r.llm_calls.len() as f64).collect();
            let wall: Vec<f64> = rs.iter().map(|r| r.wall_ms as f64).collect();
            let has = |src: TokenSource| rs.iter().any(|r| r.llm_calls.iter().any(|c| c.token_source == src));
            let token_source = match (has(TokenSource::Provider), has(TokenSource::Proxy)) {
                (true, true) => "mixed",
                (true, false) => "provider",
                _ => "proxy",
            };
            CostRow {
                model,
                method,
                n: rs.len(),
                mean_tokens_in: mean(&tin),
                median_tokens_in: median(&tin),
                mean_tokens_out: mean(&tout),
                median_tokens_out: median(&tout),
                mean_calls: mean(&calls),
                mean_wall_ms: mean(&wall),
                token_source: token_source.into(),
            }
        })
        .collect()
}

pub fn cost_table(rows: &[CostRow]) -> Table {
    let mut t = Table::new([
        "model", "method", "n", "mean_in", "median_in", "mean_out", "median_out", "mean_calls", "mean_wall_ms", "tokens",
    ]);
    for r in rows {
        t.push([
            r.model.clone(),
            r.method.clone(),
            r.n.to_string(),
            format!("{:.0}", r.mean_tokens_in),
            format!("{:.0}", r.median_tokens_in),
            format!("{:.0}", r.mean_tokens_out),
            format!("{:.0}", r.median_tokens_out),
            format!("{:.2}", r.mean_calls),
            format!("{:.0}", r.mean_wall_ms),
            r.token_source.clone(),
        ]);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub used: usize,
    /// Cells dropped because x was undefined.
    pub skipped: usize,
}

/// Ordinary least squares of y on x; cells with undefined x are skipped.
pub fn prefix_fraction_regression(cells: &[(Option<f64>, f64)]) -> Result<Regression, AnalysisError> {
    let pts: Vec<(f64, f64)> = cells.iter().filter_map(|&(x, y)| x.map(|x| (x, y))).collect();
    let skipped = cells.len() - pts.len();
    if skipped > 0 {
        tracing::info!(skipped, "regression cells without a defined prefix fraction");
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if pts.len() < 2 || sxx == 0.0 {
        return Err(AnalysisError::Underdetermined(pts.len()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok(Regression { slope, intercept: my - slope * mx, used: pts.len(), skipped })
}

/// Regression cells per (model, environment): x is the mean verified-prefix
/// fraction over failed, non-empty initial PoT plans of `repot` records; y
/// is the repot minus pot_retry success delta in points.
pub fn prefix_fraction_cells(repot: &[TraceRecord], retry: &[TraceRecord]) -> BTreeMap<(String, EnvId), (Option<f64>, f64)> {
    let rate = |rs: &[&TraceRecord]| 100.0 * rs.iter().filter(|r| r.success).count() as f64 / rs.len() as f64;
    fn group(rs: &[TraceRecord]) -> BTreeMap<(String, EnvId), Vec<&TraceRecord>> {
        let mut g: BTreeMap<(String, EnvId), Vec<&TraceRecord>> = BTreeMap::new();
        for r in rs {
            g.entry((r.model.clone(), r.environment)).or_default().push(r);
        }
        g
    }
    let (gr, gt) = (group(repot), group(retry));
    let mut out = BTreeMap::new();
    for (key, rs) in &gr {
        let Some(ts) = gt.get(key) else { continue };
        let fractions: Vec<f64> = rs
            .iter()
            .filter(|r| r.repot_initial_pot_success == Some(false))
            .filter_map(|r| match (r.attempt1_prefix_len, r.attempt1_plan_len) {
                (Some(k), Some(n)) if n > 0 => Some(k as f64 / n as f64),
                _ => None,
            })
            .collect();
        let x = (!fractions.is_empty()).then(|| mean(&fractions));
        out.insert(key.clone(), (x, rate(rs) - rate(ts)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MechanismRow {
    pub model: String,
    pub n: usize,
    pub repot: Count,
    pub retry: Count,
}

impl MechanismRow {
    pub fn delta(&self) -> Option<f64> {
        Some(self.repot.rate()? - self.retry.rate()?)
    }
}

/// Problems where both pot_retry's first attempt and repot's initial call
/// failed, with each method's eventual success on that subset.
pub fn paired_mechanism_subset(retry: &[TraceRecord], repot: &[TraceRecord]) -> Result<Vec<MechanismRow>, AnalysisError> {
    let mut models: BTreeMap<String, MechanismRow> = BTreeMap::new();
    let repot_by: BTreeMap<(&str, &str), &TraceRecord> =
        repot.iter().map(|r| ((r.model.as_str(), r.problem_id.as_str()), r)).collect();
    for t in retry {
        let row = models
            .entry(t.model.clone())
            .or_insert_with(|| MechanismRow { model: t.model.clone(), n: 0, repot: Count::default(), retry: Count::default() });
        let Some(r) = repot_by.get(&(t.model.as_str(), t.problem_id.as_str())) else {
            return Err(AnalysisError::Alignment(format!("{} has no repot record for {}", t.problem_id, t.model)));
        };
        let (Some(a1), Some(init)) = (t.attempt1_success, r.repot_initial_pot_success) else {
            return Err(AnalysisError::Invalid(format!("{} lacks first-attempt fields", t.problem_id)));
        };
        if !a1 && !init {
            row.n += 1;
            row.retry.add(t.success);
            row.repot.add(r.success);
        }
    }
    Ok(models.into_values().collect())
}

pub fn mechanism_table(rows: &[MechanismRow]) -> Table {
    let mut t = Table::new(["model", "N", "repot%", "retry%", "delta_pp"]);
    for r in rows {
        t.push([
            r.model.clone(),
            r.n.to_string(),
            pct(r.repot.rate()),
            pct(r.retry.rate()),
            r.delta().map_or("-".into(), |d| format!("{d:+.1}")),
        ]);
    }
    t
}

/// Route counts per model; every record must carry a known route.
pub fn routing_histogram(records: &[TraceRecord]) -> Result<BTreeMap<String, BTreeMap<Route, usize>>, AnalysisError> {
    let mut out: BTreeMap<String, BTreeMap<Route, usize>> = BTreeMap::new();
    for r in records {
        let label = r.route_taken.as_deref().unwrap_or("<none>");
        let route = Route::parse(label).ok_or_else(|| AnalysisError::UnknownRoute(label.to_string()))?;
        *out.entry(r.model.clone()).or_default().entry(route).or_default() += 1;
    }
    Ok(out)
}

pub fn routing_table(hist: &BTreeMap<String, BTreeMap<Route, usize>>) -> Table {
    let mut headers = vec!["model".to_string()];
    headers.extend(Route::ALL.iter().map(|r| r.name().to_string()));
    headers.push("total".into());
    let mut t = Table::new(headers);
    for (model, counts) in hist {
        let mut row = vec![model.clone()];
        row.extend(Route::ALL.iter().map(|r| counts.get(r).copied().unwrap_or(0).to_string()));
        row.push(counts.values().sum::<usize>().to_string());
        t.push(row);
    }
    t
}

/// Success per (condition, model) over recovery records.
pub fn derail_table(records: &[RecoveryRecord]) -> Table {
    let models: std::collections::BTreeSet<String> = records.iter().map(|r| r.trace.model.clone()).collect();
    let mut counts: BTreeMap<(Condition, String), Count> = BTreeMap::new();
    for r in records {
        counts.entry((r.condition, r.trace.model.clone())).or_default().add(r.trace.success);
    }
    let mut headers = vec!["condition".to_string()];
    headers.extend(models.iter().map(|m| format!("{m} %")));
    let mut t = Table::new(headers);
    for cond in Condition::ALL {
        if !counts.keys().any(|(c, _)| *c == cond) {
            continue;
        }
        let mut row = vec![cond.name().to_string()];
        row.extend(models.iter().map(|m| pct(counts.get(&(cond, m.clone())).and_then(Count::rate))));
        t.push(row);
    }
    t
}
