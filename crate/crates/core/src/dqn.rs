//! Deep Q-learning with ε-greedy exploration, a bounded replay memory and a
//! hard-synced target network. The agent runs against any [`Environment`].

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::callcenter::ActionVector;
use crate::env::{Backend, EnvError, Environment};
use crate::neural::{Minibatch, Mlp, NeuralError, OptimizerState};
use crate::stochastic::RngStream;
use crate::ConfigError;

/// Stream id reserved for the agent's exploration and minibatch draws.
pub const AGENT_STREAM: u64 = u64::MAX;
/// Stream id reserved for network initialization.
pub const INIT_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub learning_rate: f64,
    pub replay_capacity: usize,
    pub minibatch: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub hidden: Vec<usize>,
    /// Gradient steps between hard copies into the target network.
    pub target_sync_period: u64,
    pub episodes: usize,
    /// Multiplier applied to rewards before they enter the replay memory.
    pub reward_scale: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            replay_capacity: 300,
            minibatch: 5,
            epsilon: 0.05,
            gamma: 0.9,
            hidden: alloc::vec![32, 32],
            target_sync_period: 100,
            episodes: 150,
            reward_scale: 0.01,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |path: &str, msg: &str| Err(ConfigError::new(alloc::format!("dqn.{path}"), msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        if self.replay_capacity == 0 {
            return bad("replay_capacity", "must be positive");
        }
        if self.minibatch == 0 || self.minibatch > self.replay_capacity {
            return bad("minibatch", "must be in 1..=replay_capacity");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon", "must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma", "must lie in [0, 1)");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden", "needs at least one positive layer width");
        }
        if self.target_sync_period == 0 {
            return bad("target_sync_period", "must be positive");
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad("reward_scale", "must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DqnError {
    Env(EnvError),
    Neural(NeuralError),
    Config(ConfigError),
}

impl fmt::Display for DqnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Env(e) => write!(f, "environment: {e}"),
            Self::Neural(e) => write!(f, "network: {e}"),
            Self::Config(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for DqnError {}

impl From<EnvError> for DqnError {
    fn from(e: EnvError) -> Self {
        Self::Env(e)
    }
}

impl From<NeuralError> for DqnError {
    fn from(e: NeuralError) -> Self {
        Self::Neural(e)
    }
}

impl From<ConfigError> for DqnError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// Ring buffer; the oldest transition is overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            items: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> + '_ {
        self.items.iter()
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample<'a>(&'a self, n: usize, stream: &mut RngStream) -> Vec<&'a Transition> {
        (0..n).map(|_| &self.items[stream.below(self.items.len())]).collect()
    }
}

/// Joint-action index of an action vector (bit `k` is expert `k`).
pub fn encode_action(action: &ActionVector) -> usize {
    action.to_index()
}

pub fn decode_action(index: usize, experts: usize) -> Result<ActionVector, EnvError> {
    ActionVector::from_index(index, experts).ok_or(EnvError::InvalidAction(index))
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy choice over the network's Q-values.
pub fn select_action(qnet: &Mlp, obs: &[f64], epsilon: f64, stream: &mut RngStream) -> Result<usize, NeuralError> {
    if epsilon > 0.0 && stream.chance(epsilon) {
        return Ok(stream.below(qnet.output_dim()));
    }
    Ok(argmax(&qnet.predict(obs)?))
}

/// One-step Q-learning targets `r + γ max_a' Q_target(s', a')`, or `r` for
/// terminal transitions.
pub fn td_targets(batch: &[&Transition], target_net: &Mlp, gamma: f64) -> Result<Vec<f64>, NeuralError> {
    batch
        .iter()
        .map(|t| {
            if t.done || gamma == 0.0 {
                return Ok(t.reward);
            }
            let q = target_net.predict(&t.next_obs)?;
            let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(t.reward + gamma * best)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Direct,
    Pretrain,
    Finetune,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::Pretrain => "pretrain",
            Self::Finetune => "finetune",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveEntry {
    pub episode: usize,
    pub total_reward: f64,
    pub cumulative_sim_replications: u64,
    pub cumulative_surrogate_replications: u64,
    pub phase: Phase,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearningCurve {
    pub entries: Vec<CurveEntry>,
}

impl LearningCurve {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Episode totals of one phase, in order.
    pub fn phase_rewards(&self, phase: Phase) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|e| e.phase == phase)
            .map(|e| e.total_reward)
            .collect()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.total_reward).collect()
    }

    fn counters(&self) -> (u64, u64) {
        self.entries
            .last()
            .map_or((0, 0), |e| (e.cumulative_sim_replications, e.cumulative_surrogate_replications))
    }
}

/// Online network, target network, optimizer, replay memory and the
/// agent's own random stream.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    cfg: DqnConfig,
    qnet: Mlp,
    target: Mlp,
    opt: OptimizerState,
    buffer: ReplayBuffer,
    grad_steps: u64,
    stream: RngStream,
}

impl DqnAgent {
    pub fn new(cfg: DqnConfig, observation_dim: usize, num_actions: usize, seed: u64) -> Result<Self, DqnError> {
        cfg.validate()?;
        let mut dims = alloc::vec![observation_dim];
        dims.extend_from_slice(&cfg.hidden);
        dims.push(num_actions);
        let qnet = Mlp::new(&dims, 0.0, &mut RngStream::new(seed, INIT_STREAM))?;
        Ok(Self::with_network(cfg, qnet, seed))
    }

    /// Agent starting from an existing Q-network.
    pub fn with_network(cfg: DqnConfig, qnet: Mlp, seed: u64) -> Self {
        Self {
            opt: OptimizerState::adam(&qnet, cfg.learning_rate),
            buffer: ReplayBuffer::new(cfg.replay_capacity),
            target: qnet.clone(),
            qnet,
            grad_steps: 0,
            stream: RngStream::new(seed, AGENT_STREAM),
            cfg,
        }
    }

    pub fn config(&self) -> &DqnConfig {
        &self.cfg
    }

    pub fn qnet(&self) -> &Mlp {
        &self.qnet
    }

    pub fn target_net(&self) -> &Mlp {
        &self.target
    }

    pub fn into_qnet(self) -> Mlp {
        self.qnet
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn gradient_steps(&self) -> u64 {
        self.grad_steps
    }

    pub fn reset_replay(&mut self) {
        self.buffer.clear();
    }

    pub fn reset_optimizer(&mut self) {
        self.opt = OptimizerState::adam(&self.qnet, self.cfg.learning_rate);
    }

    pub fn remember(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    pub fn act(&mut self, obs: &[f64]) -> Result<usize, NeuralError> {
        select_action(&self.qnet, obs, self.cfg.epsilon, &mut self.stream)
    }

    /// One minibatch regression of `Q(s, a)` toward the TD targets. Other
    /// action outputs keep their current prediction as target. `None` while
    /// the memory holds fewer transitions than a minibatch.
    pub fn train_step(&mut self) -> Result<Option<f64>, NeuralError> {
        if self.buffer.len() < self.cfg.minibatch {
            return Ok(None);
        }
        let batch = self.buffer.sample(self.cfg.minibatch, &mut self.stream);
        let ys = td_targets(&batch, &self.target, self.cfg.gamma)?;
        let mut inputs = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len());
        for (t, y) in batch.iter().zip(ys) {
            let mut q = self.qnet.predict(&t.obs)?;
            q[t.action] = y;
            inputs.push(t.obs.clone());
            targets.push(q);
        }
        let (loss, grads) = self.qnet.backward(&Minibatch::new(inputs, targets)?, None)?;
        self.opt.step(&mut self.qnet, &grads)?;
        self.grad_steps += 1;
        if self.grad_steps.is_multiple_of(self.cfg.target_sync_period) {
            self.target = self.qnet.clone();
        }
        Ok(Some(loss))
    }

    /// Runs `episodes` episodes against `env`, one gradient step per
    /// environment step, appending one curve entry per episode.
    ///
    /// `episode_stream(k)` supplies the environment stream of the `k`-th
    /// episode run on this backend so far.
    pub fn run_episodes<E, F>(
        &mut self,
        env: &mut E,
        episodes: usize,
        phase: Phase,
        curve: &mut LearningCurve,
        mut episode_stream: F,
    ) -> Result<(), DqnError>
    where
        E: Environment + ?Sized,
        F: FnMut(u64) -> RngStream,
    {
        let (mut sim, mut sur) = curve.counters();
        for _ in 0..episodes {
            let backend = env.backend();
            let k = match backend {
                Backend::Simulation => sim,
                Backend::Surrogate => sur,
            };
            let mut obs = env.reset(episode_stream(k));
            let mut total = 0.0;
            for _ in 0..env.horizon() {
                let action = self.act(&obs)?;
                let out = env.step(action)?;
                total += out.reward;
                self.remember(Transition {
                    obs: core::mem::replace(&mut obs, out.observation.clone()),
                    action,
                    reward: out.reward * self.cfg.reward_scale,
                    next_obs: out.observation,
                    done: out.done,
                });
                self.train_step()?;
            }
            match backend {
                Backend::Simulation => sim += 1,
                Backend::Surrogate => sur += 1,
            }
            curve.entries.push(CurveEntry {
                episode: curve.entries.len(),
                total_reward: total,
                cumulative_sim_replications: sim,
                cumulative_surrogate_replications: sur,
                phase,
            });
        }
        Ok(())
    }
}

/// Trains a fresh agent for `cfg.episodes` episodes; episode `k` uses
/// environment stream `(seed, k)`.
pub fn train<E: Environment + ?Sized>(env: &mut E, cfg: &DqnConfig, seed: u64) -> Result<(Mlp, LearningCurve), DqnError> {
    let mut agent = DqnAgent::new(cfg.clone(), env.observation_dim(), env.num_actions(), seed)?;
    let mut curve = LearningCurve::default();
    agent.run_episodes(env, cfg.episodes, Phase::Direct, &mut curve, |k| RngStream::new(seed, k))?;
    Ok((agent.into_qnet(), curve))
}
