//! Training loop: lockstep environments feeding one replay buffer and one
//! TD3 trainer.

use std::fs::File;
use std::path::{Path, PathBuf};

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use resplit_core::env::{Observation, RawAction, ResplitEnv, StepOutcome};
use resplit_core::admm::SolverError;
use resplit_policy::checkpoint::{save_actor, save_trainer};
use resplit_policy::{ReplayBuffer, Td3Agent, Transition};
use serde::Serialize;

use crate::config::RunConfig;
use crate::pool::NamedInstance;
use crate::BenchError;

/// Stream of the instance-selection generator, distinct from the trainer's.
const PICK_STREAM: u64 = 7;

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub instance: String,
    /// Sum over steps of the shared reward plus any split reward.
    pub episode_return: f64,
    pub steps: usize,
    pub iterations: usize,
    pub converged: bool,
    pub final_n: usize,
    pub splits: usize,
    pub sigma: f64,
    pub zeta: f64,
    pub updates: u64,
    /// `log10 ‖ε‖∞` after each block, `;`-separated.
    pub eps_trace: String,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub agent: Td3Agent,
    pub logs: Vec<EpisodeLog>,
}

struct Slot {
    env: ResplitEnv,
    obs: Vec<Observation>,
    episode: usize,
    instance: usize,
    sigma: f64,
    zeta: f64,
    ret: f64,
    trace: Vec<f64>,
}

struct Output {
    dir: PathBuf,
    log: csv::Writer<File>,
}

fn start_episode(cfg: &RunConfig, pool: &[NamedInstance], episode: usize, pick: &mut ChaCha8Rng) -> Result<Slot, BenchError> {
    let total = cfg.train.episodes;
    let instance = pick.gen_range(0..pool.len());
    let zeta = cfg.env.reward.zeta(episode, total);
    let (env, obs) = ResplitEnv::reset(cfg.env.clone(), &pool[instance].instance, zeta)?;
    let first = env.status().max_residual;
    Ok(Slot {
        env,
        obs,
        episode,
        instance,
        sigma: cfg.td3.sigma(episode, total),
        zeta,
        ret: 0.0,
        trace: vec![first.max(1e-12).log10()],
    })
}

fn finish(slot: &Slot, pool: &[NamedInstance], updates: u64) -> EpisodeLog {
    let status = slot.env.status();
    EpisodeLog {
        episode: slot.episode,
        instance: pool[slot.instance].id.clone(),
        episode_return: slot.ret,
        steps: slot.env.steps(),
        iterations: status.iteration,
        converged: status.converged,
        final_n: slot.env.num_agents(),
        splits: slot.env.splits(),
        sigma: slot.sigma,
        zeta: slot.zeta,
        updates,
        eps_trace: slot.trace.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(";"),
    }
}

fn record(
    cfg: &RunConfig,
    pool: &[NamedInstance],
    slot: &Slot,
    agent: &Td3Agent,
    logs: &mut Vec<EpisodeLog>,
    output: &mut Option<Output>,
) -> Result<(), BenchError> {
    let entry = finish(slot, pool, agent.updates);
    let done = logs.len() + 1;
    if let Some(o) = output.as_mut() {
        o.log.serialize(&entry)?;
        o.log.flush()?;
        if cfg.train.checkpoint_every > 0 && done.is_multiple_of(cfg.train.checkpoint_every) {
            save_trainer(agent, &o.dir.join("checkpoints").join(format!("ep{done:06}.ckpt")))?;
        }
    }
    if done.is_multiple_of(100) {
        let recent = &logs[logs.len() + 1 - 100..];
        let conv = recent.iter().filter(|l| l.converged).count() + entry.converged as usize;
        let mean_ret = (recent.iter().map(|l| l.episode_return).sum::<f64>() + entry.episode_return) / 100.0;
        let mean_iter = (recent.iter().map(|l| l.iterations).sum::<usize>() + entry.iterations) as f64 / 100.0;
        info!(
            "{done} episodes | mean return {mean_ret:.2} | mean iterations {mean_iter:.1} | converged {conv}/100 | sigma {:.4} | updates {}",
            entry.sigma, agent.updates
        );
    }
    logs.push(entry);
    Ok(())
}

/// Trains a fresh agent. With `out`, writes `train_log.csv`, periodic
/// checkpoints under `checkpoints/`, and `final.ckpt` plus `actor.ckpt`.
/// The result depends only on `cfg` and `pool`.
pub fn train(cfg: &RunConfig, pool: &[NamedInstance], out: Option<&Path>) -> Result<TrainOutcome, BenchError> {
    cfg.validate()?;
    if pool.is_empty() {
        return Err(BenchError::Infeasible("empty training pool".into()));
    }
    let mut output = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir.join("checkpoints"))?;
            Some(Output {
                dir: dir.to_path_buf(),
                log: csv::Writer::from_path(dir.join("train_log.csv"))?,
            })
        }
        None => None,
    };

    let total = cfg.train.episodes;
    let mut agent = Td3Agent::new(cfg.td3, cfg.seed)?;
    let mut buffer = ReplayBuffer::new(cfg.td3.buffer_capacity);
    let warmup = 2 * cfg.td3.batch_size;
    let mut pick = ChaCha8Rng::seed_from_u64(cfg.seed);
    pick.set_stream(PICK_STREAM);
    let mut logs = Vec::with_capacity(total);
    let mut next_episode = 0;
    let mut decision_steps: u64 = 0;

    let mut slots: Vec<Slot> = Vec::with_capacity(cfg.train.parallel_envs);
    let mut refill = |slots: &mut Vec<Slot>,
                      next_episode: &mut usize,
                      agent: &Td3Agent,
                      logs: &mut Vec<EpisodeLog>,
                      output: &mut Option<Output>|
     -> Result<(), BenchError> {
        while slots.len() < cfg.train.parallel_envs && *next_episode < total {
            let slot = start_episode(cfg, pool, *next_episode, &mut pick)?;
            *next_episode += 1;
            if slot.env.is_done() {
                record(cfg, pool, &slot, agent, logs, output)?;
            } else {
                slots.push(slot);
            }
        }
        Ok(())
    };
    refill(&mut slots, &mut next_episode, &agent, &mut logs, &mut output)?;

    while !slots.is_empty() {
        let mut actions: Vec<Vec<[f64; 4]>> = Vec::with_capacity(slots.len());
        for slot in &slots {
            if buffer.len() < warmup {
                actions.push(agent.random_actions(slot.obs.len()));
            } else {
                agent.sigma = slot.sigma;
                actions.push(agent.explore(&slot.obs)?);
            }
        }
        let outcomes: Vec<Result<StepOutcome, SolverError>> = slots
            .par_iter_mut()
            .zip(&actions)
            .map(|(slot, acts)| {
                let raw: Vec<RawAction> = acts.iter().map(|&a| RawAction(a)).collect();
                slot.env.step(&raw)
            })
            .collect();

        let mut still_running = Vec::with_capacity(slots.len());
        for ((mut slot, acts), outcome) in slots.drain(..).zip(actions).zip(outcomes) {
            let outcome = outcome?;
            for (i, (obs, action)) in slot.obs.iter().zip(&acts).enumerate() {
                let j = outcome.info.successor[i];
                buffer.push(Transition {
                    obs: *obs,
                    action: *action,
                    reward: outcome.rewards[j],
                    next_obs: outcome.observations[j],
                    done: outcome.done,
                });
            }
            slot.ret += outcome.info.system.total() + outcome.info.action.map_or(0.0, |a| a.total());
            slot.trace.push(outcome.info.status.max_residual.max(1e-12).log10());
            slot.obs = outcome.observations;
            decision_steps += 1;
            if buffer.len() >= warmup && decision_steps.is_multiple_of(cfg.train.update_every as u64) {
                agent.update(&buffer);
            }
            if outcome.done {
                record(cfg, pool, &slot, &agent, &mut logs, &mut output)?;
            } else {
                still_running.push(slot);
            }
        }
        slots = still_running;
        refill(&mut slots, &mut next_episode, &agent, &mut logs, &mut output)?;
    }

    logs.sort_by_key(|l| l.episode);
    if let Some(dir) = out {
        save_trainer(&agent, &dir.join("final.ckpt"))?;
        save_actor(&agent.actor, &dir.join("actor.ckpt"))?;
    }
    Ok(TrainOutcome { agent, logs })
}
