use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::stochastic::{DistributionSpec, InputModels};
use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactGroupConfig {
    /// Expected arrivals per epoch (Poisson).
    pub arrival_rate_per_epoch: f64,
    pub service: DistributionSpec,
    pub patience: DistributionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertGroupConfig {
    pub size: usize,
}

/// Static description of the call center. Times are minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallCenterConfig {
    pub contact_groups: Vec<ContactGroupConfig>,
    pub expert_groups: Vec<ExpertGroupConfig>,
    /// `routing[expert_group][contact_group]`: may that group serve that contact group.
    pub routing: Vec<Vec<bool>>,
    pub epoch_length_minutes: f64,
    pub horizon_epochs: usize,
    pub backoffice_tasks_per_expert: u32,
    pub backoffice_duration: DistributionSpec,
}

impl Default for CallCenterConfig {
    /// Two contact groups, expert groups of sizes 1, 2 and 1. Gamma
    /// parameters are shape–scale (mean = shape·scale); arrival rates are
    /// counts per 30-minute epoch.
    fn default() -> Self {
        Self {
            contact_groups: vec![
                ContactGroupConfig {
                    arrival_rate_per_epoch: 7.0,
                    service: DistributionSpec::Gamma { shape: 4.0, scale: 1.0 },
                    patience: DistributionSpec::Gamma { shape: 5.0, scale: 0.9 },
                },
                ContactGroupConfig {
                    arrival_rate_per_epoch: 6.0,
                    service: DistributionSpec::Gamma { shape: 4.0, scale: 1.5 },
                    patience: DistributionSpec::Gamma { shape: 2.0, scale: 5.0 },
                },
            ],
            expert_groups: vec![
                ExpertGroupConfig { size: 1 },
                ExpertGroupConfig { size: 2 },
                ExpertGroupConfig { size: 1 },
            ],
            routing: vec![vec![true, false], vec![true, true], vec![false, true]],
            epoch_length_minutes: 30.0,
            horizon_epochs: 16,
            backoffice_tasks_per_expert: 5,
            backoffice_duration: DistributionSpec::lognormal_from_moments(1.7, 1.7)
                .expect("valid lognormal moments"),
        }
    }
}

impl CallCenterConfig {
    pub fn num_contact_groups(&self) -> usize {
        self.contact_groups.len()
    }

    pub fn num_expert_groups(&self) -> usize {
        self.expert_groups.len()
    }

    pub fn num_experts(&self) -> usize {
        self.expert_groups.iter().map(|g| g.size).sum()
    }

    /// Expert group of every expert, experts numbered group by group.
    pub fn expert_group_of(&self) -> Vec<usize> {
        self.expert_groups
            .iter()
            .enumerate()
            .flat_map(|(g, eg)| core::iter::repeat_n(g, eg.size))
            .collect()
    }

    /// Length of the observation vector: queue lengths, per-group backlog,
    /// busy count and normalized epoch index.
    pub fn observation_dim(&self) -> usize {
        self.num_contact_groups() + self.num_expert_groups() + 2
    }

    /// Input models implied by this configuration.
    pub fn input_models(&self) -> InputModels {
        InputModels {
            arrival_rate_per_epoch: self.contact_groups.iter().map(|c| c.arrival_rate_per_epoch).collect(),
            service: self.contact_groups.iter().map(|c| c.service).collect(),
            patience: self.contact_groups.iter().map(|c| c.patience).collect(),
            backoffice_duration: self.backoffice_duration,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let dist = |path: &str, d: &DistributionSpec| {
            d.validate().map_err(|e| match e {
                crate::stochastic::StochasticError::ParameterDomain { name, value } => {
                    ConfigError::new(format!("{path}.{name}"), format!("out of domain: {value}"))
                }
                other => ConfigError::new(path, format!("{other}")),
            })
        };
        if self.contact_groups.is_empty() {
            return Err(ConfigError::new("contact_groups", "at least one contact group required"));
        }
        for (i, c) in self.contact_groups.iter().enumerate() {
            if !(c.arrival_rate_per_epoch >= 0.0 && c.arrival_rate_per_epoch.is_finite()) {
                return Err(ConfigError::new(
                    format!("contact_groups[{i}].arrival_rate_per_epoch"),
                    format!("must be a nonnegative finite rate, got {}", c.arrival_rate_per_epoch),
                ));
            }
            dist(&format!("contact_groups[{i}].service"), &c.service)?;
            dist(&format!("contact_groups[{i}].patience"), &c.patience)?;
        }
        if self.expert_groups.is_empty() {
            return Err(ConfigError::new("expert_groups", "at least one expert group required"));
        }
        for (g, eg) in self.expert_groups.iter().enumerate() {
            if eg.size == 0 {
                return Err(ConfigError::new(format!("expert_groups[{g}].size"), "must be positive"));
            }
        }
        if self.routing.len() != self.expert_groups.len() {
            return Err(ConfigError::new(
                "routing",
                format!("expected {} rows (one per expert group), got {}", self.expert_groups.len(), self.routing.len()),
            ));
        }
        for (g, row) in self.routing.iter().enumerate() {
            if row.len() != self.contact_groups.len() {
                return Err(ConfigError::new(
                    format!("routing[{g}]"),
                    format!("expected {} entries (one per contact group), got {}", self.contact_groups.len(), row.len()),
                ));
            }
            if !row.iter().any(|&r| r) && self.backoffice_tasks_per_expert == 0 {
                return Err(ConfigError::new(
                    format!("routing[{g}]"),
                    "expert group serves no contact group and has no back-office tasks",
                ));
            }
        }
        for c in 0..self.contact_groups.len() {
            if !self.routing.iter().any(|row| row[c]) {
                return Err(ConfigError::new(
                    "routing",
                    format!("contact group {c} is not routable to any expert group"),
                ));
            }
        }
        if !(self.epoch_length_minutes > 0.0 && self.epoch_length_minutes.is_finite()) {
            return Err(ConfigError::new("epoch_length_minutes", "must be positive"));
        }
        if self.horizon_epochs == 0 {
            return Err(ConfigError::new("horizon_epochs", "must be positive"));
        }
        dist("backoffice_duration", &self.backoffice_duration)?;
        Ok(())
    }
}
