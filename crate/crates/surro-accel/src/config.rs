//! The JSON configuration document.
//!
//! Every top-level key is optional and falls back to the default study
//! setup. Nested entries (a contact group, a distribution, a penalty) must be
//! complete. The resolved document is written next to every run's outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use surro_accel_core::callcenter::{CallCenterConfig, ContactGroupConfig, ExpertGroupConfig, RewardSpec};
use surro_accel_core::dqn::DqnConfig;
use surro_accel_core::pipeline::ExperimentSpec;
use surro_accel_core::stochastic::DistributionSpec;

use crate::{AppError, Result};

/// A reward given by name or spelled out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RewardChoice {
    Named(RewardName),
    Custom(RewardSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardName {
    Original,
    Modified,
}

impl RewardChoice {
    pub fn resolve(&self) -> RewardSpec {
        match self {
            Self::Named(RewardName::Original) => RewardSpec::original(),
            Self::Named(RewardName::Modified) => RewardSpec::modified(),
            Self::Custom(spec) => spec.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigDocument {
    pub contact_groups: Vec<ContactGroupConfig>,
    pub expert_groups: Vec<ExpertGroupConfig>,
    pub routing: Vec<Vec<bool>>,
    pub epoch_length_minutes: f64,
    pub horizon_epochs: usize,
    pub backoffice_tasks_per_expert: u32,
    pub backoffice_duration: DistributionSpec,
    /// Reward used for training and collection.
    pub reward: RewardChoice,
    /// Reward the agent is retrained under in the reward-change comparison.
    pub modified_reward: RewardChoice,
    pub seed: u64,
    pub dqn: DqnConfig,
    pub experiment: ExperimentSpec,
}

impl Default for ConfigDocument {
    fn default() -> Self {
        let cc = CallCenterConfig::default();
        Self {
            contact_groups: cc.contact_groups,
            expert_groups: cc.expert_groups,
            routing: cc.routing,
            epoch_length_minutes: cc.epoch_length_minutes,
            horizon_epochs: cc.horizon_epochs,
            backoffice_tasks_per_expert: cc.backoffice_tasks_per_expert,
            backoffice_duration: cc.backoffice_duration,
            reward: RewardChoice::Named(RewardName::Original),
            modified_reward: RewardChoice::Named(RewardName::Modified),
            seed: 0,
            dqn: DqnConfig::default(),
            experiment: ExperimentSpec::default(),
        }
    }
}

/// A fully validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub call_center: CallCenterConfig,
    pub reward: RewardSpec,
    pub modified_reward: RewardSpec,
    pub seed: u64,
    pub dqn: DqnConfig,
    pub experiment: ExperimentSpec,
}

impl ConfigDocument {
    /// Parses JSON text; errors carry the JSON path of the offending value.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                AppError::Validation(format!("config: {inner}"))
            } else {
                AppError::Validation(format!("config: {path}: {inner}"))
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks every invariant and resolves named rewards.
    pub fn resolve(&self) -> Result<Resolved> {
        let call_center = CallCenterConfig {
            contact_groups: self.contact_groups.clone(),
            expert_groups: self.expert_groups.clone(),
            routing: self.routing.clone(),
            epoch_length_minutes: self.epoch_length_minutes,
            horizon_epochs: self.horizon_epochs,
            backoffice_tasks_per_expert: self.backoffice_tasks_per_expert,
            backoffice_duration: self.backoffice_duration,
        };
        call_center.validate()?;
        let (c, g) = (call_center.num_contact_groups(), call_center.num_expert_groups());
        let reward = self.reward.resolve();
        reward.validate(c, g)?;
        let modified_reward = self.modified_reward.resolve();
        modified_reward
            .validate(c, g)
            .map_err(|e| AppError::Validation(format!("modified_{e}")))?;
        self.dqn.validate()?;
        self.experiment.validate()?;
        Ok(Resolved {
            call_center,
            reward,
            modified_reward,
            seed: self.seed,
            dqn: self.dqn.clone(),
            experiment: self.experiment.clone(),
        })
    }
}

impl Resolved {
    /// The document that reproduces this configuration, with every default
    /// and named reward written out.
    pub fn to_document(&self) -> ConfigDocument {
        let cc = self.call_center.clone();
        ConfigDocument {
            contact_groups: cc.contact_groups,
            expert_groups: cc.expert_groups,
            routing: cc.routing,
            epoch_length_minutes: cc.epoch_length_minutes,
            horizon_epochs: cc.horizon_epochs,
            backoffice_tasks_per_expert: cc.backoffice_tasks_per_expert,
            backoffice_duration: cc.backoffice_duration,
            reward: RewardChoice::Custom(self.reward.clone()),
            modified_reward: RewardChoice::Custom(self.modified_reward.clone()),
            seed: self.seed,
            dqn: self.dqn.clone(),
            experiment: self.experiment.clone(),
        }
    }
}
