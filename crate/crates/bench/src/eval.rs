//! Paired evaluation of several methods on shared instance sets.

use log::info;
use rayon::prelude::*;
use resplit_core::env::EnvConfig;
use resplit_policy::Mlp;

use crate::pool::NamedInstance;
use crate::summary::CellKey;
use crate::trial::{run_trial, Method, TrialMetrics};
use crate::BenchError;

/// Runs every method on every instance. Results are ordered by instance, then
/// by the order of `methods`, regardless of scheduling.
pub fn evaluate(
    methods: &[Method],
    instances: &[NamedInstance],
    env_cfg: &EnvConfig,
    actor: Option<&Mlp>,
    wall_clock: bool,
) -> Result<Vec<TrialMetrics>, BenchError> {
    if let Some(m) = methods.iter().find(|m| m.needs_policy()) {
        if actor.is_none() {
            return Err(BenchError::Config(format!("method {m} requires --checkpoint")));
        }
    }
    let per_instance: Vec<Result<Vec<TrialMetrics>, BenchError>> = instances
        .par_iter()
        .map(|named| {
            methods
                .iter()
                .map(|&m| {
                    let mut t = run_trial(m, &named.id, &named.instance, env_cfg, actor)?;
                    if !wall_clock {
                        t.time_ms = 0.0;
                    }
                    Ok(t)
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(instances.len() * methods.len());
    for r in per_instance {
        out.extend(r?);
    }
    info!("ran {} trials", out.len());
    Ok(out)
}

/// Attaches a benchmark cell to each trial.
pub fn label(trials: Vec<TrialMetrics>, density: &str, scale: &str) -> Vec<(CellKey, TrialMetrics)> {
    trials
        .into_iter()
        .map(|t| {
            (
                CellKey {
                    method: t.method,
                    density: density.to_string(),
                    scale: scale.to_string(),
                },
                t,
            )
        })
        .collect()
}

/// Median iterations of `method` among `trials`.
pub fn median_iterations(trials: &[TrialMetrics], method: Method) -> f64 {
    let v: Vec<f64> = trials.iter().filter(|t| t.method == method).map(|t| t.iterations as f64).collect();
    crate::summary::median(&v)
}

/// Median energy of successful trials of `method`.
pub fn median_cost(trials: &[TrialMetrics], method: Method) -> f64 {
    let v: Vec<f64> = trials
        .iter()
        .filter(|t| t.method == method && t.success)
        .map(|t| t.cost)
        .collect();
    crate::summary::median(&v)
}

/// Success rate of `method` in percent.
pub fn success_rate(trials: &[TrialMetrics], method: Method) -> f64 {
    let v: Vec<&TrialMetrics> = trials.iter().filter(|t| t.method == method).collect();
    100.0 * v.iter().filter(|t| t.success).count() as f64 / v.len().max(1) as f64
}
