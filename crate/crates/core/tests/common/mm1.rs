//! M/M/1 configuration of the call center: Poisson arrivals at 0.5/min,
//! exponential service at 1/min, one server, customers never abandon, no
//! back-office work. Oracle: mean queueing wait ρ/(μ − λ) = 1 minute.

use surro_accel_core::callcenter::{
    run_replication, ActionVector, CallCenterConfig, ContactGroupConfig, ExpertGroupConfig, RewardSpec,
};
use surro_accel_core::stochastic::{DistributionSpec, RngStream};

pub const LAMBDA: f64 = 0.5;
pub const MU: f64 = 1.0;
pub const RUN_MINUTES: f64 = 1e5;

pub fn expected_wait() -> f64 {
    (LAMBDA / MU) / (MU - LAMBDA)
}

pub fn config() -> CallCenterConfig {
    let epoch = 30.0;
    CallCenterConfig {
        contact_groups: vec![ContactGroupConfig {
            arrival_rate_per_epoch: LAMBDA * epoch,
            service: DistributionSpec::Exponential { rate: MU },
            patience: DistributionSpec::Deterministic { value: 1e12 },
        }],
        expert_groups: vec![ExpertGroupConfig { size: 1 }],
        routing: vec![vec![true]],
        epoch_length_minutes: epoch,
        horizon_epochs: (RUN_MINUTES / epoch).ceil() as usize,
        backoffice_tasks_per_expert: 0,
        backoffice_duration: DistributionSpec::Deterministic { value: 1.0 },
    }
}

/// Mean wait over every customer whose wait ended, and their number.
pub fn mean_wait(seed: u64) -> (f64, usize) {
    let config = config();
    let mut stream = RngStream::new(seed, 0);
    let (_, state) = run_replication(&config, &RewardSpec::zero(1, 1), |_| ActionVector::all_front_office(1), &mut stream)
        .expect("valid configuration");
    let waits: Vec<f64> = state.customers().iter().filter_map(|c| c.wait()).collect();
    (waits.iter().sum::<f64>() / waits.len() as f64, waits.len())
}
