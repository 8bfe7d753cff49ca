//! Aggregation of trial metrics into per-cell tables.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use serde::Serialize;

use crate::trial::{Method, TrialMetrics};
use crate::BenchError;

/// Benchmark cell a trial belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub method: Method,
    pub density: String,
    pub scale: String,
}

/// One summary row; iteration statistics cover every trial, cost statistics
/// only successful ones.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub density: String,
    pub scale: String,
    pub trials: usize,
    pub mean_iterations: f64,
    pub median_iterations: f64,
    pub mean_time_ms: f64,
    pub mean_cost: f64,
    pub median_cost: f64,
    pub success_rate: f64,
    pub p5: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
    pub mean_final_n: f64,
    pub mean_splits: f64,
}

/// Linear-interpolation percentile of an ascending slice, `q` in `[0, 100]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q / 100.0 * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile(&v, 50.0)
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Summarizes one group of trials; `None` for an empty group.
pub fn summarize(key: &CellKey, trials: &[&TrialMetrics]) -> Option<SummaryRow> {
    if trials.is_empty() {
        warn!("no trials for {} / {} / {}", key.method, key.density, key.scale);
        return None;
    }
    let mut iters: Vec<f64> = trials.iter().map(|t| t.iterations as f64).collect();
    iters.sort_by(f64::total_cmp);
    let costs: Vec<f64> = trials.iter().filter(|t| t.success).map(|t| t.cost).collect();
    let successes = trials.iter().filter(|t| t.success).count();
    let field = |f: fn(&TrialMetrics) -> f64| mean(&trials.iter().map(|t| f(t)).collect::<Vec<_>>());
    Some(SummaryRow {
        method: key.method,
        density: key.density.clone(),
        scale: key.scale.clone(),
        trials: trials.len(),
        mean_iterations: mean(&iters),
        median_iterations: percentile(&iters, 50.0),
        mean_time_ms: field(|t| t.time_ms),
        mean_cost: mean(&costs),
        median_cost: median(&costs),
        success_rate: 100.0 * successes as f64 / trials.len() as f64,
        p5: percentile(&iters, 5.0),
        p25: percentile(&iters, 25.0),
        p50: percentile(&iters, 50.0),
        p75: percentile(&iters, 75.0),
        p95: percentile(&iters, 95.0),
        mean_final_n: field(|t| t.final_n as f64),
        mean_splits: field(|t| t.splits as f64),
    })
}

/// Groups trials by cell and summarizes each, in key order.
pub fn aggregate(records: &[(CellKey, TrialMetrics)]) -> Result<Vec<SummaryRow>, BenchError> {
    if records.is_empty() {
        return Err(BenchError::Config("nothing to aggregate".into()));
    }
    let mut groups: BTreeMap<&CellKey, Vec<&TrialMetrics>> = BTreeMap::new();
    for (key, m) in records {
        groups.entry(key).or_default().push(m);
    }
    Ok(groups.into_iter().filter_map(|(k, v)| summarize(k, &v)).collect())
}

/// Writes rows with a header line in field order.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), BenchError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
