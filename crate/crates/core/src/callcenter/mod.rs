//! The call-center environment: two contact groups with abandonment, three
//! expert groups that split their time between customers (front office)
//! and a private pile of back-office tasks.
//!
//! At each epoch boundary every expert is told which mode to work in for
//! the next epoch. The mode change is non-preemptive: a call or task in
//! progress finishes first.

mod config;
mod reward;
mod sim;

pub use config::{CallCenterConfig, ContactGroupConfig, ExpertGroupConfig};
pub use reward::{compute_reward, terminal_reward, Penalty, RewardSpec};
pub use sim::{Customer, CustomerStatus, Expert, ExpertMode, SystemState, Violation, Work};

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::env::{Backend, EnvError, Environment, StepOutcome};
use crate::stochastic::RngStream;

/// KPI vectors of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochKpis {
    /// Average wait (minutes) of customers whose wait ended this epoch.
    #[serde(rename = "W")]
    pub waiting: Vec<f64>,
    /// Abandoned / wait-ended, per contact group.
    #[serde(rename = "A")]
    pub abandonment: Vec<f64>,
    /// Busy fraction per expert group.
    #[serde(rename = "U")]
    pub utilization: Vec<f64>,
    /// Remaining back-office tasks per expert group.
    #[serde(rename = "B")]
    pub backoffice: Vec<u32>,
}

impl EpochKpis {
    /// KPI entries in the fixed order W, A, U, B.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.waiting.len() * 2 + self.utilization.len() * 2);
        v.extend_from_slice(&self.waiting);
        v.extend_from_slice(&self.abandonment);
        v.extend_from_slice(&self.utilization);
        v.extend(self.backoffice.iter().map(|&b| f64::from(b)));
        v
    }
}

/// One mode per expert: `true` sends the expert to back-office work.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActionVector(Vec<bool>);

impl ActionVector {
    pub fn new(back_office: Vec<bool>) -> Self {
        Self(back_office)
    }

    pub fn all_front_office(experts: usize) -> Self {
        Self(alloc::vec![false; experts])
    }

    /// From 0/1 entries; anything else is rejected.
    pub fn from_bits(bits: &[u8]) -> Option<Self> {
        bits.iter()
            .map(|&b| match b {
                0 => Some(false),
                1 => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(Self)
    }

    /// Joint-action index: bit `k` (least significant first) is expert `k`.
    pub fn from_index(index: usize, experts: usize) -> Option<Self> {
        if experts >= usize::BITS as usize || index >= 1 << experts {
            return None;
        }
        Some(Self((0..experts).map(|k| index >> k & 1 == 1).collect()))
    }

    pub fn to_index(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (k, &b)| acc | (usize::from(b) << k))
    }

    pub fn to_bits(&self) -> Vec<u8> {
        self.0.iter().map(|&b| u8::from(b)).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }
}

/// One recorded epoch of a replication; also a line of the trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochRecord {
    pub replication: u64,
    pub epoch: usize,
    pub obs: Vec<f64>,
    /// Arrivals per contact group during this epoch.
    pub arrivals: Vec<u32>,
    pub action: Vec<u8>,
    pub kpis: EpochKpis,
    /// Epoch reward; the last epoch also carries the terminal penalty.
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub replication: u64,
    pub records: Vec<EpochRecord>,
    pub total_reward: f64,
}

/// Runs one full replication under `policy`, recording every epoch.
pub fn run_replication<P>(
    config: &CallCenterConfig,
    reward: &RewardSpec,
    mut policy: P,
    stream: &mut RngStream,
) -> Result<(Trajectory, SystemState), EnvError>
where
    P: FnMut(&[f64]) -> ActionVector,
{
    let mut state = SystemState::new(config)?;
    reward.validate(config.num_contact_groups(), config.num_expert_groups())?;
    let horizon = config.horizon_epochs;
    let mut records = Vec::with_capacity(horizon);
    let mut total = 0.0;
    for epoch in 0..horizon {
        let obs = state.observation(config);
        let action = policy(&obs);
        let (kpis, arrivals) = state.step_epoch(config, &action, stream)?;
        let done = epoch + 1 == horizon;
        let mut r = compute_reward(&kpis, reward);
        if done {
            r += terminal_reward(&kpis, reward);
        }
        total += r;
        records.push(EpochRecord {
            replication: stream.stream_id(),
            epoch,
            obs,
            arrivals,
            action: action.to_bits(),
            kpis,
            reward: r,
            next_obs: state.observation(config),
            done,
        });
    }
    Ok((
        Trajectory {
            replication: stream.stream_id(),
            records,
            total_reward: total,
        },
        state,
    ))
}

/// The simulation as an [`Environment`] with joint binary actions.
#[derive(Debug, Clone)]
pub struct CallCenterEnv {
    config: CallCenterConfig,
    reward: RewardSpec,
    episode: Option<(SystemState, RngStream)>,
    last: Option<(EpochKpis, Vec<u32>)>,
}

impl CallCenterEnv {
    pub fn new(config: CallCenterConfig, reward: RewardSpec) -> Result<Self, crate::ConfigError> {
        config.validate()?;
        reward.validate(config.num_contact_groups(), config.num_expert_groups())?;
        Ok(Self {
            config,
            reward,
            episode: None,
            last: None,
        })
    }

    pub fn config(&self) -> &CallCenterConfig {
        &self.config
    }

    pub fn reward_spec(&self) -> &RewardSpec {
        &self.reward
    }

    /// KPIs and arrival counts of the most recent step.
    pub fn last_step(&self) -> Option<&(EpochKpis, Vec<u32>)> {
        self.last.as_ref()
    }

    pub fn state(&self) -> Option<&SystemState> {
        self.episode.as_ref().map(|(s, _)| s)
    }
}

impl Environment for CallCenterEnv {
    fn observation_dim(&self) -> usize {
        self.config.observation_dim()
    }

    fn num_actions(&self) -> usize {
        1 << self.config.num_experts()
    }

    fn horizon(&self) -> usize {
        self.config.horizon_epochs
    }

    fn backend(&self) -> Backend {
        Backend::Simulation
    }

    fn reset(&mut self, stream: RngStream) -> Vec<f64> {
        let state = SystemState::new(&self.config).expect("validated at construction");
        let obs = state.observation(&self.config);
        self.episode = Some((state, stream));
        self.last = None;
        obs
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome, EnvError> {
        let (state, stream) = self.episode.as_mut().ok_or(EnvError::NotReset)?;
        let action = ActionVector::from_index(action, self.config.num_experts())
            .ok_or(EnvError::InvalidAction(action))?;
        let (kpis, arrivals) = state.step_epoch(&self.config, &action, stream)?;
        let done = state.epoch_index() == self.config.horizon_epochs;
        let mut reward = compute_reward(&kpis, &self.reward);
        if done {
            reward += terminal_reward(&kpis, &self.reward);
        }
        let observation = state.observation(&self.config);
        self.last = Some((kpis, arrivals));
        Ok(StepOutcome { observation, reward, done })
    }

    fn observe(&self) -> Result<Vec<f64>, EnvError> {
        self.episode
            .as_ref()
            .map(|(s, _)| s.observation(&self.config))
            .ok_or(EnvError::NotReset)
    }
}

#[cfg(test)]
mod tests;
