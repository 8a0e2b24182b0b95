//! Episodic environment contract shared by the simulation and the surrogate.

use alloc::vec::Vec;
use core::fmt;

use crate::descore::CausalityError;
use crate::stochastic::RngStream;
use crate::ConfigError;

/// Which backend produced an episode; drives replication accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Simulation,
    Surrogate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// Terminal transition: no bootstrapping past it.
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvError {
    /// `step` called after the horizon was reached.
    EpisodeComplete,
    InvalidAction(usize),
    /// `step` or `observe` before `reset`.
    NotReset,
    Causality(CausalityError),
    /// The surrogate has no fitted network.
    Untrained,
    Config(ConfigError),
}

impl fmt::Display for EnvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EpisodeComplete => f.write_str("episode already complete"),
            Self::InvalidAction(a) => write!(f, "invalid action index {a}"),
            Self::NotReset => f.write_str("environment used before reset"),
            Self::Causality(e) => write!(f, "{e}"),
            Self::Untrained => f.write_str("surrogate model is not trained"),
            Self::Config(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for EnvError {}

impl From<ConfigError> for EnvError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<CausalityError> for EnvError {
    fn from(e: CausalityError) -> Self {
        Self::Causality(e)
    }
}

/// Gym-style episodic environment with a discrete action set.
///
/// Every episode runs exactly [`horizon`](Environment::horizon) steps.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn horizon(&self) -> usize;
    fn backend(&self) -> Backend;

    /// Starts a new episode driven by `stream`; returns the first observation.
    fn reset(&mut self, stream: RngStream) -> Vec<f64>;

    fn step(&mut self, action: usize) -> Result<StepOutcome, EnvError>;

    fn observe(&self) -> Result<Vec<f64>, EnvError>;
}
