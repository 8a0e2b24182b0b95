use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::EpochKpis;
use crate::ConfigError;

/// `penalty` is added to the reward whenever the metric exceeds `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Penalty {
    pub threshold: f64,
    pub penalty: f64,
}

const fn p(threshold: f64, penalty: f64) -> Penalty {
    Penalty { threshold, penalty }
}

/// Piecewise-indicator reward over the epoch KPIs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSpec {
    /// Per contact group, on the average waiting time (minutes).
    pub waiting: Vec<Vec<Penalty>>,
    /// Per contact group, on the abandonment rate.
    pub abandonment: Vec<Vec<Penalty>>,
    /// Per expert group, on the utilization.
    pub utilization: Vec<Vec<Penalty>>,
    /// Applied once per back-office task left at the end of the horizon.
    pub terminal_per_task: f64,
}

impl RewardSpec {
    /// The original objective: mild service-level penalties, −20 per
    /// unfinished back-office task.
    pub fn original() -> Self {
        let w = vec![p(2.0, -10.0), p(4.0, -40.0)];
        let a = vec![p(0.3, -20.0), p(0.5, -60.0)];
        Self {
            waiting: vec![w.clone(), w],
            abandonment: vec![a.clone(), a],
            utilization: vec![vec![p(0.9, -4.0)]; 3],
            terminal_per_task: -20.0,
        }
    }

    /// The modified objective with per-group thresholds and a heavy
    /// over-utilization penalty, −50 per unfinished task.
    pub fn modified() -> Self {
        Self {
            waiting: vec![
                vec![p(1.0, -100.0), p(2.0, -1200.0)],
                vec![p(2.0, -100.0), p(4.0, -1200.0)],
            ],
            abandonment: vec![
                vec![p(0.2, -40.0), p(0.5, -30.0)],
                vec![p(0.3, -40.0), p(0.5, -30.0)],
            ],
            utilization: vec![vec![p(0.9, -2000.0)]; 3],
            terminal_per_task: -50.0,
        }
    }

    /// A spec with no penalties for the given group counts.
    pub fn zero(contact_groups: usize, expert_groups: usize) -> Self {
        Self {
            waiting: vec![Vec::new(); contact_groups],
            abandonment: vec![Vec::new(); contact_groups],
            utilization: vec![Vec::new(); expert_groups],
            terminal_per_task: 0.0,
        }
    }

    pub fn validate(&self, contact_groups: usize, expert_groups: usize) -> Result<(), ConfigError> {
        let lists = [
            ("waiting", &self.waiting, contact_groups),
            ("abandonment", &self.abandonment, contact_groups),
            ("utilization", &self.utilization, expert_groups),
        ];
        for (name, per_group, expected) in lists {
            if per_group.len() != expected {
                return Err(ConfigError::new(
                    format!("reward.{name}"),
                    format!("expected {expected} lists, got {}", per_group.len()),
                ));
            }
            for (g, list) in per_group.iter().enumerate() {
                for (i, pen) in list.iter().enumerate() {
                    let path = format!("reward.{name}[{g}][{i}]");
                    if !pen.threshold.is_finite() {
                        return Err(ConfigError::new(format!("{path}.threshold"), "must be finite"));
                    }
                    if !(pen.penalty <= 0.0 && pen.penalty.is_finite()) {
                        return Err(ConfigError::new(format!("{path}.penalty"), "must be finite and ≤ 0"));
                    }
                    if i > 0 && pen.threshold < list[i - 1].threshold {
                        return Err(ConfigError::new(format!("{path}.threshold"), "thresholds must be nondecreasing"));
                    }
                }
            }
        }
        if !(self.terminal_per_task <= 0.0 && self.terminal_per_task.is_finite()) {
            return Err(ConfigError::new("reward.terminal_per_task", "must be finite and ≤ 0"));
        }
        Ok(())
    }
}

fn indicator_sum(values: &[f64], lists: &[Vec<Penalty>]) -> f64 {
    values
        .iter()
        .zip(lists)
        .flat_map(|(&v, list)| list.iter().filter(move |pen| v > pen.threshold))
        .fold(0.0, |acc, pen| acc + pen.penalty)
}

/// Per-epoch reward: every penalty whose threshold is exceeded.
pub fn compute_reward(kpis: &EpochKpis, spec: &RewardSpec) -> f64 {
    indicator_sum(&kpis.waiting, &spec.waiting)
        + indicator_sum(&kpis.abandonment, &spec.abandonment)
        + indicator_sum(&kpis.utilization, &spec.utilization)
}

/// End-of-horizon penalty on the remaining back-office tasks.
pub fn terminal_reward(final_kpis: &EpochKpis, spec: &RewardSpec) -> f64 {
    let tasks: u32 = final_kpis.backoffice.iter().sum();
    spec.terminal_per_task * f64::from(tasks)
}
