use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::AnalysisError;
use crate::runner::TraceRecord;
use crate::seed;

/// Per-problem outcome pairs `(a, b)`, aligned on problem id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairedSample {
    pub ids: Vec<String>,
    pub pairs: Vec<(bool, bool)>,
}

impl PairedSample {
    /// Aligns two arms. Every id must appear exactly once in each arm.
    pub fn align(a: &[TraceRecord], b: &[TraceRecord]) -> Result<Self, AnalysisError> {
        let index = |arm: &[TraceRecord], name: &str| -> Result<HashMap<String, bool>, AnalysisError> {
            let mut m = HashMap::new();
            for r in arm {
                if m.insert(r.problem_id.clone(), r.success).is_some() {
                    return Err(AnalysisError::Alignment(format!("{} appears twice in arm {name}", r.problem_id)));
                }
            }
            Ok(m)
        };
        let ma = index(a, "a")?;
        let mb = index(b, "b")?;
        let mut ids: Vec<String> = ma.keys().cloned().collect();
        ids.sort();
        if let Some(missing) = ids.iter().find(|id| !mb.contains_key(*id)) {
            return Err(AnalysisError::Alignment(format!("{missing} is missing from arm b")));
        }
        if let Some(missing) = mb.keys().find(|id| !ma.contains_key(*id)) {
            return Err(AnalysisError::Alignment(format!("{missing} is missing from arm a")));
        }
        let pairs = ids.iter().map(|id| (ma[id], mb[id])).collect();
        Ok(Self { ids, pairs })
    }

    pub fn from_pairs(pairs: Vec<(bool, bool)>) -> Self {
        Self { ids: (0..pairs.len()).map(|i| i.to_string()).collect(), pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn diffs(&self) -> Vec<i64> {
        self.pairs.iter().map(|&(a, b)| i64::from(a) - i64::from(b)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapCi {
    /// Observed `rate(a) - rate(b)` in percentage points.
    pub delta: f64,
    pub lo: f64,
    pub hi: f64,
    /// Number of resamples the bounds come from.
    pub resamples: usize,
    /// The full resampling distribution was enumerated (`n^n <= B`).
    pub exhaustive: bool,
}

/// Linear-interpolation sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

const CHUNK: usize = 1000;

/// Paired percentile bootstrap over resamples of problem indices.
///
/// When `n^n <= b` every index tuple is enumerated once instead, which is
/// the exact bootstrap distribution.
pub fn paired_bootstrap_ci(sample: &PairedSample, b: usize, level: f64, seed: u64) -> Result<BootstrapCi, AnalysisError> {
    let n = sample.len();
    if n == 0 {
        return Err(AnalysisError::Empty("paired sample"));
    }
    if b == 0 || !(0.0 < level && level < 1.0) {
        return Err(AnalysisError::Invalid(format!("bootstrap needs B > 0 and 0 < level < 1 (got {b}, {level})")));
    }
    let d = sample.diffs();
    let scale = 100.0 / n as f64;
    let delta = d.iter().sum::<i64>() as f64 * scale;

    let exhaustive_size = (n as u32).checked_pow(n as u32).filter(|&t| (t as usize) <= b).map(|t| t as usize);
    let mut stats: Vec<f64> = match exhaustive_size {
        Some(total) => (0..total)
            .into_par_iter()
            .map(|mut code| {
                let mut s = 0;
                for _ in 0..n {
                    s += d[code % n];
                    code /= n;
                }
                s as f64 * scale
            })
            .collect(),
        None => (0..b.div_ceil(CHUNK))
            .into_par_iter()
            .flat_map_iter(|chunk| {
                let mut rng = seed::rng(seed::mix(&[seed, chunk as u64]));
                let count = CHUNK.min(b - chunk * CHUNK);
                let d = &d;
                (0..count)
                    .map(move |_| (0..n).map(|_| d[rng.gen_range(0..n)]).sum::<i64>() as f64 * scale)
                    .collect::<Vec<_>>()
            })
            .collect(),
    };
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(BootstrapCi {
        delta,
        lo: quantile_sorted(&stats, alpha),
        hi: quantile_sorted(&stats, 1.0 - alpha),
        resamples: stats.len(),
        exhaustive: exhaustive_size.is_some(),
    })
}
