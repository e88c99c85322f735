use num_rational::Ratio;
use serde::Serialize;

use super::AnalysisError;
use crate::runner::TraceRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryParams {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl RecoveryParams {
    pub fn new(p: f64, q: f64, r: f64, b: f64, b_prime: f64) -> Result<Self, AnalysisError> {
        let all = [p, q, r, b, b_prime];
        if all.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(AnalysisError::Invalid(format!("probabilities must lie in [0, 1]: {all:?}")));
        }
        if p + q > 1.0 + 1e-12 {
            return Err(AnalysisError::Invalid(format!("p + q = {} exceeds 1", p + q)));
        }
        if b_prime > b {
            return Err(AnalysisError::Invalid(format!("b' = {b_prime} exceeds b = {b}")));
        }
        Ok(Self { p, q, r, b, b_prime })
    }
}

/// `q(r - b) - (1 - p - q)(b - b')`; repair wins when it is positive.
pub fn eq2_margin(p: f64, q: f64, r: f64, b: f64, b_prime: f64) -> f64 {
    q * (r - b) - (1.0 - p - q) * (b - b_prime)
}

pub fn eq2_evaluate(params: &RecoveryParams) -> (bool, f64) {
    let m = eq2_margin(params.p, params.q, params.r, params.b, params.b_prime);
    (m > 0.0, m)
}

/// Exact version over rationals.
pub fn eq2_evaluate_exact(p: Ratio<i64>, q: Ratio<i64>, r: Ratio<i64>, b: Ratio<i64>, b_prime: Ratio<i64>) -> (bool, Ratio<i64>) {
    let one = Ratio::from_integer(1);
    let m = q * (r - b) - (one - p - q) * (b - b_prime);
    (m > Ratio::from_integer(0), m)
}

/// A conditional rate with its counts; undefined when nothing conditions it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Rate {
    pub hits: usize,
    pub total: usize,
}

impl Rate {
    pub fn value(&self) -> Option<f64> {
        (self.total > 0).then(|| self.hits as f64 / self.total as f64)
    }

    pub fn exact(&self) -> Option<Ratio<i64>> {
        (self.total > 0).then(|| Ratio::new(self.hits as i64, self.total as i64))
    }

    fn count<'a>(rows: impl Iterator<Item = &'a TraceRecord>, hit: impl Fn(&TraceRecord) -> bool) -> Self {
        let mut r = Rate { hits: 0, total: 0 };
        for row in rows {
            r.total += 1;
            r.hits += usize::from(hit(row));
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Eq2Estimate {
    pub p: Rate,
    pub q: Rate,
    pub r: Rate,
    pub b: Rate,
    pub b_prime: Rate,
}

impl Eq2Estimate {
    /// All five values, if every one is defined.
    pub fn params(&self) -> Option<RecoveryParams> {
        Some(RecoveryParams {
            p: self.p.value()?,
            q: self.q.value()?,
            r: self.r.value()?,
            b: self.b.value()?,
            b_prime: self.b_prime.value()?,
        })
    }

    pub fn exact_margin(&self) -> Option<(bool, Ratio<i64>)> {
        Some(eq2_evaluate_exact(
            self.p.exact()?,
            self.q.exact()?,
            self.r.exact()?,
            self.b.exact()?,
            self.b_prime.exact()?,
        ))
    }
}

/// Estimates the recovery-model inputs.
///
/// `p`, `q` and `r` come from the initial PoT call and repair of `repot`
/// records; `b` and `b'` from `pot_retry` records, split on the verified
/// prefix length of their first attempt.
pub fn eq2_estimate(repot: &[TraceRecord], retry: &[TraceRecord]) -> Result<Eq2Estimate, AnalysisError> {
    for r in repot {
        if r.repot_initial_pot_success.is_none() || r.attempt1_prefix_len.is_none() {
            return Err(AnalysisError::Invalid(format!("{} ({}) lacks initial-attempt fields", r.problem_id, r.method)));
        }
    }
    for r in retry {
        if r.attempt1_success.is_none() || r.attempt1_prefix_len.is_none() {
            return Err(AnalysisError::Invalid(format!("{} ({}) lacks attempt-1 fields", r.problem_id, r.method)));
        }
    }
    let initial_ok = |r: &TraceRecord| r.repot_initial_pot_success == Some(true);
    let recoverable = |r: &TraceRecord| !initial_ok(r) && r.attempt1_prefix_len.unwrap_or(0) > 0;
    let first_failed = |r: &&TraceRecord| r.attempt1_success == Some(false);
    Ok(Eq2Estimate {
        p: Rate::count(repot.iter(), initial_ok),
        q: Rate::count(repot.iter(), recoverable),
        r: Rate::count(repot.iter().filter(|r| recoverable(r)), |r| r.success),
        b: Rate::count(retry.iter().filter(first_failed), |r| r.success),
        b_prime: Rate::count(
            retry.iter().filter(first_failed).filter(|r| r.attempt1_prefix_len == Some(0)),
            |r| r.success,
        ),
    })
}
