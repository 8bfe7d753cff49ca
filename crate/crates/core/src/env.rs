//! Multi-agent re-splitting environment: every segment is an agent sharing one
//! policy; at most one agent wins the right to split per decision step.

use serde::{Deserialize, Serialize};

use crate::admm::{AdmmSolver, SolverConfig, SolverError, SolverStatus};
use crate::problem::ProblemInstance;
use crate::trajectory::log10_floored;

/// Observation length per agent: 6 local features plus 5 global ones.
pub const OBS_DIM: usize = 11;
/// Raw action length per agent: gate, ratio, bias, inflation.
pub const ACT_DIM: usize = 4;
/// Default election threshold on the gate output.
pub const GATE_THRESHOLD: f64 = 0.3;

pub type Observation = [f64; OBS_DIM];

/// Policy output for one agent, each component in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RawAction(pub [f64; ACT_DIM]);

impl RawAction {
    pub fn new(gate: f64, ratio: f64, bias: f64, inflation: f64) -> Self {
        Self([gate, ratio, bias, inflation])
    }

    pub fn gate(&self) -> f64 {
        self.0[0]
    }

    pub fn ratio(&self) -> f64 {
        self.0[1]
    }

    pub fn bias(&self) -> f64 {
        self.0[2]
    }

    pub fn inflation(&self) -> f64 {
        self.0[3]
    }

    /// Copy with every component clamped into `[-1, 1]` (non-finite values become 0).
    pub fn clamped(&self) -> Self {
        Self(self.0.map(|v| if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 }))
    }
}

/// Decoded split request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCommand {
    /// Arc-length fraction of the split point, in `[0.1, 0.9]`.
    pub spatial: f64,
    /// Share of the (inflated) duration given to the left child, in `[0.1, 0.9]`.
    pub time_ratio: f64,
    /// Duration inflation, in `[0, 0.3]`.
    pub inflation: f64,
    pub gate: f64,
}

/// Maps a raw action to a split command.
pub fn decode_action(raw: &RawAction) -> SplitCommand {
    let a = raw.clamped();
    // clamped so rounding at ratio = -1 cannot dip below 0.1
    let spatial = (0.4 * a.ratio() + 0.5).clamp(0.1, 0.9);
    SplitCommand {
        spatial,
        time_ratio: (spatial + 0.2 * a.bias()).clamp(0.1, 0.9),
        inflation: (0.3 * a.inflation()).max(0.0),
        gate: a.gate(),
    }
}

/// Index of the largest gate strictly above `threshold`; ties go to the lowest
/// index. `None` when no gate qualifies.
pub fn elect(actions: &[RawAction], threshold: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, a) in actions.iter().enumerate() {
        let g = a.gate();
        if g > threshold && best.is_none_or(|(_, b)| g > b) {
            best = Some((i, g));
        }
    }
    best.map(|(i, _)| i)
}

/// `tanh` of the least-squares slope of `values` against their index.
pub fn trend(values: impl ExactSizeIterator<Item = f64> + Clone) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean_x = (n - 1) as f64 / 2.0;
    let mean_y = values.clone().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, y) in values.enumerate() {
        let dx = k as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    (sxy / sxx).tanh()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Progress weight on the drop of `log10 ‖ε‖∞`.
    pub lambda1: f64,
    /// Per-step cost.
    pub lambda2: f64,
    /// Terminal bonus per iteration saved against the baseline.
    pub lambda3: f64,
    /// Cost of a split.
    pub lambda4: f64,
    /// Weight on the jerk-density imbalance of the two children.
    pub lambda5: f64,
    /// Weight on the inflation factor.
    pub lambda6: f64,
    /// Weight of the boundary-bias guidance.
    pub lambda7: f64,
    pub r_conv: f64,
    pub r_fail: f64,
    /// Fraction of training over which the guidance weight decays to zero.
    pub guidance_decay: f64,
    /// Soft segment budget as a multiple of the initial segment count.
    pub n_max_factor: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.05,
            lambda3: 0.01,
            lambda4: 0.5,
            lambda5: 0.1,
            lambda6: 0.5,
            lambda7: 0.2,
            r_conv: 10.0,
            r_fail: 10.0,
            guidance_decay: 0.3,
            n_max_factor: 4.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), String> {
        let weights = [
            self.lambda1,
            self.lambda2,
            self.lambda3,
            self.lambda4,
            self.lambda5,
            self.lambda6,
            self.lambda7,
            self.r_conv,
            self.r_fail,
        ];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err("reward weights must be finite and nonnegative".into());
        }
        if !(self.guidance_decay > 0.0 && self.guidance_decay <= 1.0) {
            return Err("guidance_decay must lie in (0, 1]".into());
        }
        if !(self.n_max_factor >= 1.0) {
            return Err("n_max_factor must be at least 1".into());
        }
        Ok(())
    }

    /// Guidance weight for episode `episode` of `total`: linear decay from 1 to
    /// 0 over the first `guidance_decay` fraction of training.
    pub fn zeta(&self, episode: usize, total: usize) -> f64 {
        let horizon = self.guidance_decay * total.max(1) as f64;
        (1.0 - episode as f64 / horizon).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub solver: SolverConfig,
    pub reward: RewardConfig,
    pub gate_threshold: f64,
    /// Forces every split's inflation to zero.
    pub mask_inflation: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            reward: RewardConfig::default(),
            gate_threshold: GATE_THRESHOLD,
            mask_inflation: false,
        }
    }
}

impl EnvConfig {
    /// Decision steps per episode.
    pub fn max_steps(&self) -> usize {
        self.solver.max_iter / self.solver.k_dec
    }
}

/// Action-level reward terms of the winning agent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionReward {
    pub split: f64,
    pub balance: f64,
    pub inflation: f64,
    pub guidance: f64,
}

impl ActionReward {
    pub fn total(&self) -> f64 {
        self.split + self.balance + self.inflation + self.guidance
    }
}

/// Shared reward terms of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SystemReward {
    pub progress: f64,
    pub step: f64,
    pub terminal: f64,
}

impl SystemReward {
    pub fn total(&self) -> f64 {
        self.progress + self.step + self.terminal
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub winner: Option<usize>,
    pub command: Option<SplitCommand>,
    /// The winner's split was refused by the solver and skipped.
    pub split_rejected: bool,
    pub system: SystemReward,
    pub action: Option<ActionReward>,
    pub status: SolverStatus,
    /// For each agent before the step, its index after the step.
    pub successor: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub observations: Vec<Observation>,
    pub done: bool,
    pub info: StepInfo,
}

/// One episode over one problem instance.
#[derive(Debug, Clone)]
pub struct ResplitEnv {
    cfg: EnvConfig,
    solver: AdmmSolver,
    k_base: Option<usize>,
    n_max: usize,
    steps: usize,
    splits: usize,
    zeta: f64,
    log_eps_inf: f64,
    done: bool,
}

impl ResplitEnv {
    /// Builds the solver for `instance`, runs the first block of iterations and
    /// returns the environment with its initial observations. `zeta` is the
    /// guidance weight for this episode.
    pub fn reset(cfg: EnvConfig, instance: &ProblemInstance, zeta: f64) -> Result<(Self, Vec<Observation>), SolverError> {
        let solver = instance.build_solver(&cfg.solver).map_err(|e| match e {
            crate::problem::ProblemError::Solver(s) => s,
            other => SolverError::Setup(other.to_string()),
        })?;
        let n0 = solver.num_segments();
        let n_max = ((cfg.reward.n_max_factor * n0 as f64).round() as usize).max(n0);
        let mut env = Self {
            k_base: instance.k_base,
            n_max,
            steps: 0,
            splits: 0,
            zeta,
            log_eps_inf: 0.0,
            done: false,
            solver,
            cfg,
        };
        let status = env.solver.iterate_block(env.cfg.solver.k_dec);
        env.log_eps_inf = log10_floored(status.max_residual);
        env.done = status.terminated();
        let obs = env.observe();
        Ok((env, obs))
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn solver(&self) -> &AdmmSolver {
        &self.solver
    }

    pub fn num_agents(&self) -> usize {
        self.solver.num_segments()
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn splits(&self) -> usize {
        self.splits
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn status(&self) -> SolverStatus {
        self.solver.status()
    }

    /// Per-agent observations from the latest residuals.
    pub fn observe(&self) -> Vec<Observation> {
        let segs = self.solver.segments();
        let n = segs.len();
        let eps: Vec<f64> = segs.iter().map(|s| s.eps()).collect();
        let duals: Vec<f64> = (0..n).map(|i| self.solver.dual_norm(i)).collect();
        let jbar: Vec<f64> = segs.iter().map(|s| s.segment().log_energy_density()).collect();
        let eps_inf = eps.iter().copied().fold(0.0, f64::max);
        let y_inf = duals.iter().copied().fold(0.0, f64::max);
        let j_inf = jbar.iter().map(|j| j.abs()).fold(0.0, f64::max);
        let eps_mean = eps.iter().sum::<f64>() / n as f64;
        let global = [
            log10_floored(eps_inf),
            log10_floored(y_inf),
            j_inf,
            log10_floored(eps_mean),
            n as f64 / self.n_max as f64,
        ];
        (0..n)
            .map(|i| {
                let s = &segs[i];
                let local = [
                    log10_floored(eps[i]),
                    log10_floored(duals[i]),
                    jbar[i],
                    trend(s.history().iter().copied()),
                    s.segment().duration(),
                    (s.eps_right() - s.eps_left()).tanh(),
                ];
                let mut obs = [0.0; OBS_DIM];
                obs[..6].copy_from_slice(&local);
                obs[6..].copy_from_slice(&global);
                obs
            })
            .collect()
    }

    /// Elects at most one splitting agent, applies its split, advances the
    /// solver by one block and scores the step.
    pub fn step(&mut self, actions: &[RawAction]) -> Result<StepOutcome, SolverError> {
        if self.done {
            return Err(SolverError::Terminated);
        }
        let n = self.solver.num_segments();
        if actions.len() != n {
            return Err(SolverError::Setup(format!("{} actions for {} agents", actions.len(), n)));
        }
        let winner = elect(actions, self.cfg.gate_threshold);
        let mut command = None;
        let mut action_reward = None;
        let mut split_rejected = false;
        let mut successor: Vec<usize> = (0..n).collect();
        if let Some(i) = winner {
            let raw = actions[i].clamped();
            let mut cmd = decode_action(&raw);
            if self.cfg.mask_inflation {
                cmd.inflation = 0.0;
            }
            let delta = self.solver.segments()[i].eps_right() - self.solver.segments()[i].eps_left();
            let delta = delta.tanh();
            let parent = self.solver.segments()[i].segment();
            let t_split = parent.arc_time(cmd.spatial)?;
            match self.solver.split_segment(i, t_split, cmd.time_ratio, cmd.inflation) {
                Ok(()) => {
                    self.splits += 1;
                    for s in successor.iter_mut().skip(i + 1) {
                        *s += 1;
                    }
                    let segs = self.solver.segments();
                    let imbalance =
                        (segs[i].segment().log_energy_density() - segs[i + 1].segment().log_energy_density()).abs();
                    let rc = &self.cfg.reward;
                    action_reward = Some(ActionReward {
                        split: -rc.lambda4,
                        balance: -rc.lambda5 * imbalance,
                        inflation: -rc.lambda6 * cmd.inflation,
                        guidance: -rc.lambda7 * delta * (raw.ratio() + raw.bias()) * self.zeta,
                    });
                }
                Err(SolverError::DegenerateSplit { .. }) | Err(SolverError::Conditioning { .. }) => {
                    split_rejected = true;
                }
                Err(e) => return Err(e),
            }
            command = Some(cmd);
        }

        let status = self.solver.iterate_block(self.cfg.solver.k_dec);
        self.steps += 1;
        let log_eps = log10_floored(status.max_residual);
        let rc = &self.cfg.reward;
        let mut system = SystemReward {
            progress: rc.lambda1 * (self.log_eps_inf - log_eps),
            step: -rc.lambda2,
            terminal: 0.0,
        };
        self.log_eps_inf = log_eps;
        self.done = status.terminated() || self.steps >= self.cfg.max_steps();
        if self.done {
            system.terminal = self.terminal_reward(&status);
        }
        let r_sys = system.total();
        let mut rewards = vec![r_sys; self.solver.num_segments()];
        if let (Some(i), Some(act)) = (winner, action_reward) {
            rewards[i] = r_sys + act.total();
        }
        Ok(StepOutcome {
            rewards,
            observations: self.observe(),
            done: self.done,
            info: StepInfo {
                winner,
                command,
                split_rejected,
                system,
                action: action_reward,
                status,
                successor,
            },
        })
    }

    fn terminal_reward(&self, status: &SolverStatus) -> f64 {
        let rc = &self.cfg.reward;
        if !status.converged {
            return -rc.r_fail;
        }
        if self.solver.num_segments() >= self.n_max {
            return 0.5 * rc.r_conv;
        }
        match self.k_base {
            Some(k_base) => rc.r_conv + rc.lambda3 * (k_base as f64 - status.iteration as f64),
            None => {
                log::warn!("instance has no baseline iteration count; skipping the saving bonus");
                rc.r_conv
            }
        }
    }
}

/// Rule-based baseline: split the highest-residual segment at its midpoint
/// (spatial and temporal ratio 0.5, no inflation) while below the soft budget.
pub fn heuristic_actions(env: &ResplitEnv) -> Vec<RawAction> {
    let segs = env.solver().segments();
    let mut actions = vec![RawAction::new(-1.0, 0.0, 0.0, -1.0); segs.len()];
    if env.num_agents() < env.n_max() {
        let target = (0..segs.len()).fold(0, |best, i| if segs[i].eps() > segs[best].eps() { i } else { best });
        actions[target] = RawAction::new(1.0, 0.0, 0.0, -1.0);
    }
    actions
}
