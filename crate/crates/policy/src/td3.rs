//! Twin-delayed deterministic policy gradient trainer.

use log::warn;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::adam::{Adam, AdamConfig};
use crate::nn::{concat_cols, Mlp, MlpSpec};
use crate::replay::{Batch, ReplayBuffer};
use crate::{PolicyError, ACT_DIM, OBS_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Td3Config {
    pub hidden: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub policy_delay: u64,
    pub target_noise: f64,
    pub noise_clip: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub sigma_start: f64,
    pub sigma_end: f64,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            hidden: 256,
            actor_lr: 4e-4,
            critic_lr: 4e-3,
            gamma: 0.99,
            tau: 0.005,
            policy_delay: 4,
            target_noise: 0.2,
            noise_clip: 0.5,
            batch_size: 512,
            buffer_capacity: 40_000,
            sigma_start: 0.1,
            sigma_end: 0.01,
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |what: &str| Err(PolicyError::Config(what.to_string()));
        if self.hidden == 0 {
            return bad("hidden must be positive");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.policy_delay == 0 {
            return bad("policy_delay must be at least 1");
        }
        if !(self.target_noise >= 0.0 && self.noise_clip >= 0.0) {
            return bad("target noise settings must be nonnegative");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("batch_size and buffer_capacity must be positive");
        }
        if !(self.sigma_start > 0.0 && self.sigma_end > 0.0 && self.sigma_end <= self.sigma_start) {
            return bad("need 0 < sigma_end <= sigma_start");
        }
        Ok(())
    }

    pub fn actor_spec(&self) -> MlpSpec {
        MlpSpec {
            input: OBS_DIM,
            hidden: self.hidden,
            output: ACT_DIM,
            tanh_output: true,
        }
    }

    pub fn critic_spec(&self) -> MlpSpec {
        MlpSpec {
            input: OBS_DIM + ACT_DIM,
            hidden: self.hidden,
            output: 1,
            tanh_output: false,
        }
    }

    /// Exploration scale for `episode` out of `total`: geometric interpolation
    /// from `sigma_start` to `sigma_end`.
    pub fn sigma(&self, episode: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.sigma_start;
        }
        let frac = (episode.min(total - 1)) as f64 / (total - 1) as f64;
        self.sigma_start * (self.sigma_end / self.sigma_start).powf(frac)
    }
}

fn check_input(x: ArrayView2<f64>, width: usize) -> Result<(), PolicyError> {
    if x.ncols() != width {
        return Err(PolicyError::Shape(format!("expected {width} input columns, got {}", x.ncols())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(PolicyError::NonFinite);
    }
    Ok(())
}

/// Deterministic actor forward pass on a `B × 11` batch.
pub fn actor_forward(actor: &Mlp, obs: ArrayView2<f64>) -> Result<Array2<f64>, PolicyError> {
    check_input(obs, OBS_DIM)?;
    Ok(actor.forward(obs))
}

/// Critic forward pass on `B × 11` observations and `B × 4` actions.
pub fn critic_forward(critic: &Mlp, obs: ArrayView2<f64>, act: ArrayView2<f64>) -> Result<Array2<f64>, PolicyError> {
    check_input(obs, OBS_DIM)?;
    check_input(act, ACT_DIM)?;
    if obs.nrows() != act.nrows() {
        return Err(PolicyError::Shape(format!("{} observations vs {} actions", obs.nrows(), act.nrows())));
    }
    Ok(critic.forward(concat_cols(obs, act).view()))
}

/// Mean-squared Bellman error of `critic` against fixed targets and its
/// parameter gradient.
pub fn critic_loss_grad(critic: &Mlp, obs: ArrayView2<f64>, act: ArrayView2<f64>, target: &Array1<f64>) -> (f64, Vec<f64>) {
    let input = concat_cols(obs, act);
    let cache = critic.forward_cached(input.view());
    let q = cache.output().column(0);
    let n = q.len() as f64;
    let diff = &q - target;
    let loss = diff.mapv(|d| d * d).sum() / n;
    let d_out = (diff * (2.0 / n)).insert_axis(Axis(1));
    let mut grad = vec![0.0; critic.params().len()];
    critic.backward(&cache, d_out.view(), &mut grad);
    (loss, grad)
}

/// Actor objective `−mean Q(s, π(s))` and its gradient with respect to the
/// actor parameters; the critic is held fixed.
pub fn actor_loss_grad(actor: &Mlp, critic: &Mlp, obs: ArrayView2<f64>) -> (f64, Vec<f64>) {
    let a_cache = actor.forward_cached(obs);
    let input = concat_cols(obs, a_cache.output().view());
    let c_cache = critic.forward_cached(input.view());
    let n = obs.nrows() as f64;
    let loss = -c_cache.output().sum() / n;
    let d_q = Array2::from_elem((obs.nrows(), 1), -1.0 / n);
    let mut scratch = vec![0.0; critic.params().len()];
    let d_input = critic.backward(&c_cache, d_q.view(), &mut scratch);
    let d_act = d_input.slice(s![.., OBS_DIM..]).to_owned();
    let mut grad = vec![0.0; actor.params().len()];
    actor.backward(&a_cache, d_act.view(), &mut grad);
    (loss, grad)
}

/// Bootstrap targets with the per-row target-critic values they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub y: Array1<f64>,
    pub q1: Array1<f64>,
    pub q2: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    /// Sum of both critics' mean-squared errors.
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
}

/// Complete trainer state: online and target networks, optimizers, counters
/// and the generator used for sampling and noise.
#[derive(Debug, Clone)]
pub struct Td3Agent {
    pub config: Td3Config,
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub critic1_target: Mlp,
    pub critic2_target: Mlp,
    pub actor_opt: Adam,
    pub critic1_opt: Adam,
    pub critic2_opt: Adam,
    /// Number of completed update calls.
    pub updates: u64,
    /// Current exploration scale.
    pub sigma: f64,
    pub rng: ChaCha8Rng,
}

impl Td3Agent {
    pub fn new(config: Td3Config, seed: u64) -> Result<Self, PolicyError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = Mlp::new(config.actor_spec(), &mut rng);
        let critic1 = Mlp::new(config.critic_spec(), &mut rng);
        let critic2 = Mlp::new(config.critic_spec(), &mut rng);
        Ok(Self {
            actor_opt: Adam::new(AdamConfig::with_lr(config.actor_lr), actor.params().len()),
            critic1_opt: Adam::new(AdamConfig::with_lr(config.critic_lr), critic1.params().len()),
            critic2_opt: Adam::new(AdamConfig::with_lr(config.critic_lr), critic2.params().len()),
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            updates: 0,
            sigma: config.sigma_start,
            rng,
            config,
        })
    }

    /// Greedy actions for a batch of observations.
    pub fn act(&self, obs: &[[f64; OBS_DIM]]) -> Result<Vec<[f64; ACT_DIM]>, PolicyError> {
        let out = actor_forward(&self.actor, crate::nn::batch_from_rows(obs).view())?;
        Ok(rows_to_actions(&out))
    }

    /// Greedy actions plus Gaussian noise of scale `sigma`, clamped to `[−1, 1]`.
    pub fn explore(&mut self, obs: &[[f64; OBS_DIM]]) -> Result<Vec<[f64; ACT_DIM]>, PolicyError> {
        let mut actions = self.act(obs)?;
        let noise = Normal::new(0.0, self.sigma).expect("sigma is positive");
        for a in &mut actions {
            for v in a.iter_mut() {
                *v = (*v + noise.sample(&mut self.rng)).clamp(-1.0, 1.0);
            }
        }
        Ok(actions)
    }

    /// Uniform random actions for the warm-up phase.
    pub fn random_actions(&mut self, count: usize) -> Vec<[f64; ACT_DIM]> {
        (0..count)
            .map(|_| std::array::from_fn(|_| self.rng.gen_range(-1.0..=1.0)))
            .collect()
    }

    /// Smoothed target actions and twin-min bootstrap targets for a batch.
    pub fn targets(&mut self, batch: &Batch) -> Targets {
        let noise = Normal::new(0.0, self.config.target_noise.max(f64::MIN_POSITIVE)).expect("finite scale");
        let clip = self.config.noise_clip;
        let mut next_act = self.actor_target.forward(batch.next_obs.view());
        for v in next_act.iter_mut() {
            let eps = if self.config.target_noise > 0.0 {
                noise.sample(&mut self.rng).clamp(-clip, clip)
            } else {
                0.0
            };
            *v = (*v + eps).clamp(-1.0, 1.0);
        }
        let input = concat_cols(batch.next_obs.view(), next_act.view());
        let q1 = self.critic1_target.forward(input.view()).column(0).to_owned();
        let q2 = self.critic2_target.forward(input.view()).column(0).to_owned();
        let gamma = self.config.gamma;
        let y = ndarray::Zip::from(&batch.reward)
            .and(&batch.done)
            .and(&q1)
            .and(&q2)
            .map_collect(|&r, &d, &a, &b| if d > 0.5 { r } else { r + gamma * a.min(b) });
        Targets { y, q1, q2 }
    }

    /// One update from a batch already sampled.
    pub fn update_on_batch(&mut self, batch: &Batch) -> UpdateStats {
        let targets = self.targets(batch);
        let (l1, g1) = critic_loss_grad(&self.critic1, batch.obs.view(), batch.action.view(), &targets.y);
        let (l2, g2) = critic_loss_grad(&self.critic2, batch.obs.view(), batch.action.view(), &targets.y);
        self.critic1_opt.step(self.critic1.params_mut(), &g1);
        self.critic2_opt.step(self.critic2.params_mut(), &g2);
        self.updates += 1;

        let mut actor_loss = None;
        if self.updates.is_multiple_of(self.config.policy_delay) {
            let (la, ga) = actor_loss_grad(&self.actor, &self.critic1, batch.obs.view());
            self.actor_opt.step(self.actor.params_mut(), &ga);
            self.soft_update_targets();
            actor_loss = Some(la);
        }
        UpdateStats {
            critic_loss: l1 + l2,
            actor_loss,
        }
    }

    /// Samples a batch and updates; a no-op while the buffer holds fewer than
    /// `batch_size` transitions.
    pub fn update(&mut self, buffer: &ReplayBuffer) -> Option<UpdateStats> {
        if buffer.len() < self.config.batch_size {
            warn!("replay buffer holds {} < {} transitions, skipping update", buffer.len(), self.config.batch_size);
            return None;
        }
        let batch = buffer.sample(self.config.batch_size, &mut self.rng).ok()?;
        Some(self.update_on_batch(&batch))
    }

    pub fn soft_update_targets(&mut self) {
        let tau = self.config.tau;
        self.actor_target.soft_update_from(&self.actor, tau);
        self.critic1_target.soft_update_from(&self.critic1, tau);
        self.critic2_target.soft_update_from(&self.critic2, tau);
    }
}

fn rows_to_actions(out: &Array2<f64>) -> Vec<[f64; ACT_DIM]> {
    out.rows().into_iter().map(|r| std::array::from_fn(|j| r[j])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Td3Config {
        Td3Config {
            hidden: 16,
            batch_size: 8,
            ..Td3Config::default()
        }
    }

    #[test]
    fn sigma_schedule_endpoints_and_monotone() {
        let cfg = Td3Config::default();
        assert_eq!(cfg.sigma(0, 100), 0.1);
        assert!((cfg.sigma(99, 100) - 0.01).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for e in 0..100 {
            let s = cfg.sigma(e, 100);
            assert!(s <= prev);
            prev = s;
        }
    }

    #[test]
    fn explore_stays_in_range() {
        let mut agent = Td3Agent::new(small(), 1).unwrap();
        agent.sigma = 5.0;
        let acts = agent.explore(&[[0.3; OBS_DIM]; 20]).unwrap();
        assert!(acts.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn rejects_bad_inputs() {
        let agent = Td3Agent::new(small(), 1).unwrap();
        let mut obs = [[0.0; OBS_DIM]; 2];
        obs[1][3] = f64::NAN;
        assert!(matches!(agent.act(&obs), Err(PolicyError::NonFinite)));
        let wide = Array2::<f64>::zeros((3, OBS_DIM + 1));
        assert!(matches!(actor_forward(&agent.actor, wide.view()), Err(PolicyError::Shape(_))));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = Td3Config {
            sigma_end: 0.5,
            ..Td3Config::default()
        };
        assert!(Td3Agent::new(cfg, 0).is_err());
    }
}
