//! Single-instance runs of each planning strategy.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use ndarray::Array2;
use resplit_core::env::{heuristic_actions, EnvConfig, Observation, RawAction, ResplitEnv};
use resplit_core::problem::ProblemInstance;
use resplit_policy::td3::actor_forward;
use resplit_policy::Mlp;
use serde::{Deserialize, Serialize};

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Fixed segmentation, never splits.
    Fixed,
    /// Splits the highest-residual segment at its midpoint every step.
    Heuristic,
    /// Learned policy.
    Atrs,
    /// Learned policy with the inflation output forced to zero.
    AtrsNoInflation,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Fixed, Method::Heuristic, Method::Atrs, Method::AtrsNoInflation];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fixed => "fixed",
            Method::Heuristic => "heuristic",
            Method::Atrs => "atrs",
            Method::AtrsNoInflation => "atrs-no-inflation",
        }
    }

    pub fn needs_policy(self) -> bool {
        matches!(self, Method::Atrs | Method::AtrsNoInflation)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Method {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| BenchError::Config(format!("unknown method `{s}`")))
    }
}

/// Outcome of one run; serialized as one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub method: Method,
    pub instance: String,
    pub iterations: usize,
    /// Wall time of the whole decision and solve loop, inference included.
    pub time_ms: f64,
    /// Jerk energy of the solver's segment polynomials at termination.
    pub cost: f64,
    pub success: bool,
    pub final_n: usize,
    pub splits: usize,
    #[serde(skip)]
    pub timing: TrialTiming,
    /// Inflation of every executed split, in order.
    #[serde(skip)]
    pub inflations: Vec<f64>,
}

/// Sub-timers of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrialTiming {
    pub solver: Duration,
    pub inference: Duration,
    pub total: Duration,
}

fn policy_actions(actor: &Mlp, obs: &[Observation]) -> Result<Vec<RawAction>, BenchError> {
    let batch = Array2::from_shape_fn((obs.len(), obs[0].len()), |(i, j)| obs[i][j]);
    let out = actor_forward(actor, batch.view())?;
    Ok(out.rows().into_iter().map(|r| RawAction([r[0], r[1], r[2], r[3]])).collect())
}

/// Runs `method` on `instance` until convergence, failure or the decision
/// budget runs out.
pub fn run_trial(
    method: Method,
    id: &str,
    instance: &ProblemInstance,
    env_cfg: &EnvConfig,
    actor: Option<&Mlp>,
) -> Result<TrialMetrics, BenchError> {
    if method.needs_policy() && actor.is_none() {
        return Err(BenchError::Config(format!("method {method} requires a policy checkpoint")));
    }
    let mut cfg = env_cfg.clone();
    cfg.mask_inflation = method == Method::AtrsNoInflation;
    let mut timing = TrialTiming::default();
    let mut inflations = Vec::new();

    let start = Instant::now();
    let (mut env, mut obs) = ResplitEnv::reset(cfg, instance, 0.0)?;
    timing.solver += start.elapsed();
    while !env.is_done() {
        let actions = match method {
            Method::Fixed => vec![RawAction::new(-1.0, 0.0, 0.0, -1.0); obs.len()],
            Method::Heuristic => heuristic_actions(&env),
            Method::Atrs | Method::AtrsNoInflation => {
                let t = Instant::now();
                let a = policy_actions(actor.expect("checked above"), &obs)?;
                timing.inference += t.elapsed();
                a
            }
        };
        let t = Instant::now();
        let outcome = env.step(&actions)?;
        timing.solver += t.elapsed();
        if let (Some(cmd), false) = (outcome.info.command, outcome.info.split_rejected) {
            inflations.push(cmd.inflation);
        }
        obs = outcome.observations;
    }
    let status = env.status();
    let cost = env.solver().jerk_energy();
    timing.total = start.elapsed();
    Ok(TrialMetrics {
        method,
        instance: id.to_string(),
        iterations: status.iteration,
        time_ms: timing.total.as_secs_f64() * 1e3,
        cost,
        success: status.converged,
        final_n: env.num_agents(),
        splits: env.splits(),
        timing,
        inflations,
    })
}
