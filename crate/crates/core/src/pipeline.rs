//! Experiment orchestration: direct training versus surrogate pretraining
//! plus simulation fine-tuning, and the stabilization measurement that
//! compares them.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::callcenter::{run_replication, ActionVector, CallCenterConfig, CallCenterEnv, RewardSpec, Trajectory};
use crate::dqn::{select_action, DqnAgent, DqnConfig, DqnError, LearningCurve, Phase};
use crate::env::EnvError;
use crate::neural::Mlp;
use crate::stochastic::{fit_input_models, RngStream, StochasticError};
use crate::surrogate::{
    build_dataset, initial_state_features, train_surrogate, Layout, RmseReport, SurrogateEnv, SurrogateError,
    SurrogateModel, SurrogateTrainConfig,
};
use crate::ConfigError;

/// Collection replications live in their own block of stream ids.
pub const COLLECT_STREAM_BASE: u64 = 1 << 40;
/// Surrogate episodes live in their own block of stream ids.
pub const SURROGATE_STREAM_BASE: u64 = 1 << 41;
const COLLECT_POLICY_STREAM: u64 = u64::MAX - 4;

#[derive(Debug, Clone, PartialEq)]
pub enum PipelineError {
    Config(ConfigError),
    Env(EnvError),
    Dqn(DqnError),
    Surrogate(SurrogateError),
    Stochastic(StochasticError),
    /// A curve too short for the stabilization window.
    InsufficientData { needed: usize, got: usize },
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(e) => write!(f, "invalid configuration: {e}"),
            Self::Env(e) => write!(f, "environment: {e}"),
            Self::Dqn(e) => write!(f, "agent: {e}"),
            Self::Surrogate(e) => write!(f, "surrogate: {e}"),
            Self::Stochastic(e) => write!(f, "input models: {e}"),
            Self::InsufficientData { needed, got } => {
                write!(f, "curve has {got} episodes, stabilization needs at least {needed}")
            }
        }
    }
}

impl core::error::Error for PipelineError {}

macro_rules! from_error {
    ($($t:ty => $v:ident),*) => {$(
        impl From<$t> for PipelineError {
            fn from(e: $t) -> Self {
                Self::$v(e)
            }
        }
    )*};
}
from_error!(ConfigError => Config, EnvError => Env, DqnError => Dqn, SurrogateError => Surrogate, StochasticError => Stochastic);

/// Moving-average band test that decides when a reward curve has settled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilizationCriterion {
    pub window: usize,
    /// Band half-width as a fraction of the absolute final-window mean...
    pub band_fraction: f64,
    /// ...but never narrower than this many reward units.
    pub band_floor: f64,
}

impl Default for StabilizationCriterion {
    fn default() -> Self {
        Self {
            window: 10,
            band_fraction: 0.1,
            band_floor: 5.0,
        }
    }
}

impl StabilizationCriterion {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.window < 2 {
            return Err(ConfigError::new("experiment.stabilization.window", "must be at least 2"));
        }
        if !(self.band_fraction >= 0.0 && self.band_fraction.is_finite()) {
            return Err(ConfigError::new("experiment.stabilization.band_fraction", "must be finite and ≥ 0"));
        }
        if !(self.band_floor > 0.0 && self.band_floor.is_finite()) {
            return Err(ConfigError::new("experiment.stabilization.band_floor", "must be positive"));
        }
        Ok(())
    }

    pub fn band(&self, final_mean: f64) -> f64 {
        (self.band_fraction * final_mean.abs()).max(self.band_floor)
    }
}

/// First index `e` such that every `w`-episode moving average from `e` on
/// lies within the band around the final window's average. The window at `e`
/// must end before the final window starts, so a curve that keeps drifting
/// has no stabilization point.
pub fn detect_stabilization(rewards: &[f64], crit: &StabilizationCriterion) -> Result<Option<usize>, PipelineError> {
    let w = crit.window;
    let n = rewards.len();
    if n < 2 * w {
        return Err(PipelineError::InsufficientData { needed: 2 * w, got: n });
    }
    let mut averages = Vec::with_capacity(n - w + 1);
    let mut sum: f64 = rewards[..w].iter().sum();
    averages.push(sum / w as f64);
    for i in w..n {
        sum += rewards[i] - rewards[i - w];
        averages.push(sum / w as f64);
    }
    let last = rewards[n - w..].iter().sum::<f64>() / w as f64;
    let band = crit.band(last);
    let mut e = averages.len();
    while e > 0 && (averages[e - 1] - last).abs() <= band {
        e -= 1;
    }
    Ok((e <= n - 2 * w).then_some(e))
}

/// Stabilization point of one phase of a curve, counted in that phase's
/// episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stabilization {
    pub index: Option<usize>,
    pub phase_length: usize,
}

impl Stabilization {
    pub fn of(curve: &LearningCurve, phase: Phase, crit: &StabilizationCriterion) -> Result<Self, PipelineError> {
        let rewards = curve.phase_rewards(phase);
        Ok(Self {
            index: detect_stabilization(&rewards, crit)?,
            phase_length: rewards.len(),
        })
    }

    /// Replications spent before stabilization; a curve that never settles
    /// counts its whole length.
    pub fn replications(&self) -> usize {
        self.index.unwrap_or(self.phase_length)
    }
}

/// Budgets and switches of the comparison experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub collect_replications: usize,
    pub pretrain_surrogate_episodes: usize,
    pub seeds: usize,
    pub reset_replay_on_finetune: bool,
    pub reset_optimizer_on_finetune: bool,
    pub stabilization: StabilizationCriterion,
    pub surrogate: SurrogateTrainConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            collect_replications: 200,
            pretrain_surrogate_episodes: 200,
            seeds: 5,
            reset_replay_on_finetune: true,
            reset_optimizer_on_finetune: false,
            stabilization: StabilizationCriterion::default(),
            surrogate: SurrogateTrainConfig::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.collect_replications < 2 {
            return Err(ConfigError::new("experiment.collect_replications", "need at least 2 to split train/holdout"));
        }
        if self.seeds == 0 {
            return Err(ConfigError::new("experiment.seeds", "must be positive"));
        }
        self.stabilization.validate()?;
        self.surrogate.validate()
    }
}

/// Trains from scratch against the simulation; episode `k` uses stream
/// `(seed, k)`.
pub fn run_direct(
    config: &CallCenterConfig,
    reward: &RewardSpec,
    dqn: &DqnConfig,
    seed: u64,
) -> Result<(DqnAgent, LearningCurve), PipelineError> {
    let mut env = CallCenterEnv::new(config.clone(), reward.clone())?;
    let mut agent = DqnAgent::new(dqn.clone(), config.observation_dim(), 1 << config.num_experts(), seed)?;
    let mut curve = LearningCurve::default();
    agent.run_episodes(&mut env, dqn.episodes, Phase::Direct, &mut curve, |k| RngStream::new(seed, k))?;
    Ok((agent, curve))
}

/// Runs `n` replications under the ε-greedy policy of `qnet`.
pub fn collect(
    config: &CallCenterConfig,
    reward: &RewardSpec,
    qnet: &Mlp,
    epsilon: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<Trajectory>, PipelineError> {
    let experts = config.num_experts();
    let mut policy_stream = RngStream::new(seed, COLLECT_POLICY_STREAM);
    let mut failure = None;
    let mut out = Vec::with_capacity(n);
    for k in 0..n as u64 {
        let mut stream = RngStream::new(seed, COLLECT_STREAM_BASE + k);
        let policy = |obs: &[f64]| match select_action(qnet, obs, epsilon, &mut policy_stream) {
            Ok(a) => ActionVector::from_index(a, experts).unwrap_or_else(|| ActionVector::all_front_office(experts)),
            Err(e) => {
                failure.get_or_insert(e);
                ActionVector::all_front_office(experts)
            }
        };
        let (trajectory, _) = run_replication(config, reward, policy, &mut stream)?;
        if let Some(e) = failure.take() {
            return Err(DqnError::Neural(e).into());
        }
        out.push(trajectory);
    }
    Ok(out)
}

/// Builds the dataset, fits the arrival models on the training split and
/// trains the surrogate.
pub fn fit_surrogate(
    config: &CallCenterConfig,
    trajectories: &[Trajectory],
    cfg: &SurrogateTrainConfig,
    seed: u64,
) -> Result<(SurrogateModel, RmseReport), PipelineError> {
    let dataset = build_dataset(Layout::of(config), trajectories, seed)?;
    let models = config.input_models();
    let input_models = fit_input_models(
        &dataset.train_arrivals,
        models.service,
        models.patience,
        models.backoffice_duration,
    )?;
    let init = initial_state_features(config)?;
    Ok(train_surrogate(&dataset, cfg, input_models, init, seed)?)
}

/// Fresh agent trained on the surrogate, then continued on the simulation
/// with the same per-episode streams as [`run_direct`].
pub fn run_pretrain_finetune(
    config: &CallCenterConfig,
    reward: &RewardSpec,
    surrogate: Arc<SurrogateModel>,
    dqn: &DqnConfig,
    spec: &ExperimentSpec,
    seed: u64,
) -> Result<(DqnAgent, LearningCurve), PipelineError> {
    let mut sim = CallCenterEnv::new(config.clone(), reward.clone())?;
    let mut sur = SurrogateEnv::new(surrogate, reward.clone())?;
    let mut agent = DqnAgent::new(dqn.clone(), config.observation_dim(), 1 << config.num_experts(), seed)?;
    let mut curve = LearningCurve::default();
    agent.run_episodes(&mut sur, spec.pretrain_surrogate_episodes, Phase::Pretrain, &mut curve, |k| {
        RngStream::new(seed, SURROGATE_STREAM_BASE + k)
    })?;
    if spec.reset_replay_on_finetune {
        agent.reset_replay();
    }
    if spec.reset_optimizer_on_finetune {
        agent.reset_optimizer();
    }
    agent.run_episodes(&mut sim, dqn.episodes, Phase::Finetune, &mut curve, |k| RngStream::new(seed, k))?;
    Ok((agent, curve))
}

/// Stabilization of both strategies under one reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub direct: Stabilization,
    pub pretrain_finetune: Stabilization,
}

impl Comparison {
    pub fn of(
        direct: &LearningCurve,
        pretrained: &LearningCurve,
        crit: &StabilizationCriterion,
    ) -> Result<Self, PipelineError> {
        Ok(Self {
            direct: Stabilization::of(direct, Phase::Direct, crit)?,
            pretrain_finetune: Stabilization::of(pretrained, Phase::Finetune, crit)?,
        })
    }
}

/// Everything one seed of the experiment produces.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub trajectories: Vec<Trajectory>,
    pub surrogate: Arc<SurrogateModel>,
    pub rmse: RmseReport,
    pub direct_original: LearningCurve,
    pub pretrain_original: LearningCurve,
    pub direct_modified: LearningCurve,
    pub pretrain_modified: LearningCurve,
    pub original: Comparison,
    pub modified: Comparison,
}

/// One seed of the full experiment: direct training under the original
/// reward, collection with its final policy, surrogate fit, then both
/// strategies under both rewards. The surrogate is fitted once and reused
/// for the modified reward.
pub fn run_seed(
    config: &CallCenterConfig,
    original: &RewardSpec,
    modified: &RewardSpec,
    dqn: &DqnConfig,
    spec: &ExperimentSpec,
    seed: u64,
) -> Result<SeedOutcome, PipelineError> {
    let (agent, direct_original) = run_direct(config, original, dqn, seed)?;
    let trajectories = collect(config, original, agent.qnet(), dqn.epsilon, spec.collect_replications, seed)?;
    drop(agent);
    let (model, rmse) = fit_surrogate(config, &trajectories, &spec.surrogate, seed)?;
    let surrogate = Arc::new(model);
    let (_, pretrain_original) = run_pretrain_finetune(config, original, surrogate.clone(), dqn, spec, seed)?;
    let (_, direct_modified) = run_direct(config, modified, dqn, seed)?;
    let (_, pretrain_modified) = run_pretrain_finetune(config, modified, surrogate.clone(), dqn, spec, seed)?;
    let crit = &spec.stabilization;
    Ok(SeedOutcome {
        seed,
        original: Comparison::of(&direct_original, &pretrain_original, crit)?,
        modified: Comparison::of(&direct_modified, &pretrain_modified, crit)?,
        trajectories,
        surrogate,
        rmse,
        direct_original,
        pretrain_original,
        direct_modified,
        pretrain_modified,
    })
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

/// Medians over seeds and the speedup ratio of one reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median_direct: f64,
    pub median_pretrain_finetune: f64,
    /// Direct over pretrained replications; the denominator is floored at
    /// one replication.
    pub speedup: f64,
}

impl Summary {
    pub fn of(comparisons: &[Comparison]) -> Option<Self> {
        let d: Vec<f64> = comparisons.iter().map(|c| c.direct.replications() as f64).collect();
        let p: Vec<f64> = comparisons.iter().map(|c| c.pretrain_finetune.replications() as f64).collect();
        let (median_direct, median_pretrain_finetune) = (median(&d)?, median(&p)?);
        Some(Self {
            median_direct,
            median_pretrain_finetune,
            speedup: median_direct / median_pretrain_finetune.max(1.0),
        })
    }
}

/// Labels of the four curves of a seed, used for file names.
pub fn curve_labels() -> [&'static str; 4] {
    ["direct_original", "pretrain_original", "direct_modified", "pretrain_modified"]
}

impl SeedOutcome {
    pub fn curves(&self) -> [(&'static str, &LearningCurve); 4] {
        let [a, b, c, d] = curve_labels();
        [
            (a, &self.direct_original),
            (b, &self.pretrain_original),
            (c, &self.direct_modified),
            (d, &self.pretrain_modified),
        ]
    }
}

/// Human-readable one-line summary.
pub fn describe(label: &str, s: &Summary) -> String {
    format!(
        "{label}: median replications direct {:.1}, pretrained {:.1}, speedup {:.2}x",
        s.median_direct, s.median_pretrain_finetune, s.speedup
    )
}
