use super::*;
use crate::stochastic::DistributionSpec;
use alloc::vec;

fn det(value: f64) -> DistributionSpec {
    DistributionSpec::Deterministic { value }
}

/// One contact group, one expert.
fn single_server(service: f64, patience: f64, tasks: u32) -> CallCenterConfig {
    CallCenterConfig {
        contact_groups: vec![ContactGroupConfig {
            arrival_rate_per_epoch: 0.0,
            service: det(service),
            patience: det(patience),
        }],
        expert_groups: vec![ExpertGroupConfig { size: 1 }],
        routing: vec![vec![true]],
        epoch_length_minutes: 30.0,
        horizon_epochs: 4,
        backoffice_tasks_per_expert: tasks,
        backoffice_duration: det(20.0),
    }
}

fn quiet_default() -> CallCenterConfig {
    let mut c = CallCenterConfig::default();
    for g in &mut c.contact_groups {
        g.arrival_rate_per_epoch = 0.0;
    }
    c.backoffice_tasks_per_expert = 0;
    c
}

#[test]
fn initial_state_of_default_config() {
    let c = CallCenterConfig::default();
    let s = SystemState::new(&c).unwrap();
    assert_eq!(s.backlog(3), vec![5, 10, 5]);
    assert_eq!(s.observation(&c), vec![0.0, 0.0, 5.0, 10.0, 5.0, 0.0, 0.0]);
    assert_eq!(s.epoch_index(), 0);

    let mut c = CallCenterConfig::default();
    c.backoffice_tasks_per_expert = 0;
    assert_eq!(SystemState::new(&c).unwrap().backlog(3), vec![0, 0, 0]);
}

#[test]
fn bad_routing_is_rejected() {
    let mut c = CallCenterConfig::default();
    c.routing = vec![vec![true, false], vec![true, false], vec![true, false]];
    assert_eq!(SystemState::new(&c).unwrap_err().path, "routing");
    let mut c = CallCenterConfig::default();
    c.routing.pop();
    assert_eq!(SystemState::new(&c).unwrap_err().path, "routing");
}

#[test]
fn empty_system_has_zero_kpis() {
    let c = quiet_default();
    let mut s = SystemState::new(&c).unwrap();
    let mut rng = RngStream::new(1, 0);
    let (k, arrivals) = s.step_epoch(&c, &ActionVector::all_front_office(4), &mut rng).unwrap();
    assert_eq!(arrivals, vec![0, 0]);
    assert_eq!(k.waiting, vec![0.0, 0.0]);
    assert_eq!(k.abandonment, vec![0.0, 0.0]);
    assert_eq!(k.utilization, vec![0.0, 0.0, 0.0]);
    assert_eq!(k.backoffice, vec![0, 0, 0]);
}

#[test]
fn unserved_customer_abandons_at_patience() {
    // The only expert is in back office, so nobody can serve the caller.
    let c = single_server(10.0, 0.5, 3);
    let mut s = SystemState::new(&c).unwrap();
    let mut rng = RngStream::new(1, 0);
    let k = s
        .step_epoch_with_arrivals(&c, &ActionVector::new(vec![true]), &[vec![1.0]], &mut rng)
        .unwrap();
    let cust = &s.customers()[0];
    assert_eq!(cust.status, CustomerStatus::Abandoned);
    assert_eq!(cust.wait(), Some(0.5));
    assert_eq!(k.waiting, vec![0.5]);
    assert_eq!(k.abandonment, vec![1.0]);
    // 20-minute task finished at t=20, a second one started and still running.
    assert_eq!(k.backoffice, vec![2]);
    assert_eq!(k.utilization, vec![1.0]);
    assert!(s.audit().is_empty());
}

#[test]
fn hand_traced_single_server_epoch() {
    // Service 10 min. Caller 1 arrives at 0 and is served at once; caller 2
    // arrives at 1 and waits until 10. Mean wait (0 + 9) / 2.
    let c = single_server(10.0, 100.0, 0);
    let mut s = SystemState::new(&c).unwrap();
    let mut rng = RngStream::new(1, 0);
    let k = s
        .step_epoch_with_arrivals(&c, &ActionVector::new(vec![false]), &[vec![0.0, 1.0]], &mut rng)
        .unwrap();
    assert_eq!(k.waiting, vec![4.5]);
    assert_eq!(k.abandonment, vec![0.0]);
    assert!((k.utilization[0] - 20.0 / 30.0).abs() < 1e-12);
    assert!(s.customers().iter().all(|c| c.status == CustomerStatus::Served));
}

#[test]
fn work_in_progress_crosses_the_boundary() {
    let c = single_server(45.0, 100.0, 0);
    let mut s = SystemState::new(&c).unwrap();
    let mut rng = RngStream::new(1, 0);
    let k = s
        .step_epoch_with_arrivals(&c, &ActionVector::new(vec![false]), &[vec![0.0]], &mut rng)
        .unwrap();
    assert_eq!(k.utilization, vec![1.0]);
    assert_eq!(s.busy_count(), 1);
    // Switching to back office does not preempt the call.
    let k = s
        .step_epoch_with_arrivals(&c, &ActionVector::new(vec![true]), &[vec![]], &mut rng)
        .unwrap();
    assert!((k.utilization[0] - 0.5).abs() < 1e-12);
    assert_eq!(s.busy_count(), 0);
    assert_eq!(s.customers()[0].status, CustomerStatus::Served);
}

#[test]
fn back_office_task_starts_only_before_epoch_end() {
    let mut c = single_server(1.0, 1.0, 3);
    c.backoffice_duration = det(20.0);
    let mut s = SystemState::new(&c).unwrap();
    let mut rng = RngStream::new(1, 0);
    let back = ActionVector::new(vec![true]);
    s.step_epoch_with_arrivals(&c, &back, &[vec![]], &mut rng).unwrap();
    // tasks at [0,20) and [20,40)
    assert_eq!(s.experts()[0].remaining_tasks, 2);
    let k = s.step_epoch_with_arrivals(&c, &back, &[vec![]], &mut rng).unwrap();
    // second finished at 40, third runs 40..60 and completes exactly at the boundary
    assert_eq!(k.utilization, vec![1.0]);
    let k = s.step_epoch_with_arrivals(&c, &back, &[vec![]], &mut rng).unwrap();
    assert_eq!(k.backoffice, vec![0]);
    assert_eq!(k.utilization, vec![0.0]);
}

#[test]
fn cross_group_expert_takes_the_longest_waiting_caller() {
    // Only the shared (group 1) pool is in front office and it starts busy.
    let mut c = CallCenterConfig::default();
    c.backoffice_tasks_per_expert = 0;
    for g in &mut c.contact_groups {
        g.arrival_rate_per_epoch = 0.0;
        g.service = det(5.0);
        g.patience = det(100.0);
    }
    let mut s = SystemState::new(&c).unwrap();
    let mut rng = RngStream::new(1, 0);
    let action = ActionVector::new(vec![true, false, false, true]);
    // t=0,0.1 group-1 callers occupy both shared experts; then a group-2
    // caller at 1.0 and a group-1 caller at 2.0 wait.
    s.step_epoch_with_arrivals(&c, &action, &[vec![0.0, 0.1, 2.0], vec![1.0]], &mut rng)
        .unwrap();
    let cs = s.customers();
    // customers are numbered in arrival order: g1@0, g1@0.1, g2@1, g1@2
    assert_eq!(cs[2].contact_group, 1);
    assert_eq!(cs[2].wait_ended_at, Some(5.0));
    assert_eq!(cs[3].wait_ended_at, Some(5.1));
    assert!(s.audit().is_empty());
}

#[test]
fn observation_features() {
    let c = quiet_default();
    let mut s = SystemState::new(&c).unwrap();
    let mut rng = RngStream::new(1, 0);
    for _ in 0..8 {
        s.step_epoch(&c, &ActionVector::all_front_office(4), &mut rng).unwrap();
    }
    assert_eq!(s.observation(&c)[6], 0.5);

    let mut c = CallCenterConfig::default();
    for g in &mut c.contact_groups {
        g.service = det(100.0);
    }
    let mut s = SystemState::new(&c).unwrap();
    s.step_epoch_with_arrivals(
        &c,
        &ActionVector::all_front_office(4),
        &[vec![0.0, 0.1], vec![0.2, 0.3]],
        &mut rng,
    )
    .unwrap();
    assert_eq!(s.observation(&c)[5], 4.0);
}

#[test]
fn stepping_past_the_horizon_fails() {
    let c = single_server(1.0, 1.0, 0);
    let mut s = SystemState::new(&c).unwrap();
    let mut rng = RngStream::new(1, 0);
    let a = ActionVector::new(vec![false]);
    for _ in 0..4 {
        s.step_epoch(&c, &a, &mut rng).unwrap();
    }
    assert_eq!(s.step_epoch(&c, &a, &mut rng).unwrap_err(), EnvError::EpisodeComplete);
}

#[test]
fn zero_load_replication_earns_nothing() {
    let c = quiet_default();
    let mut rng = RngStream::new(3, 0);
    let mut toggle = 0usize;
    let (t, _) = run_replication(
        &c,
        &RewardSpec::original(),
        |_| {
            toggle += 1;
            ActionVector::from_index(toggle % 16, 4).unwrap()
        },
        &mut rng,
    )
    .unwrap();
    assert_eq!(t.total_reward, 0.0);
    assert_eq!(t.records.len(), 16);
    assert!(t.records.last().unwrap().done);
}

#[test]
fn replications_are_deterministic() {
    let c = CallCenterConfig::default();
    let run = || {
        let mut rng = RngStream::new(99, 7);
        run_replication(&c, &RewardSpec::original(), |o| ActionVector::from_index((o[0] as usize) % 16, 4).unwrap(), &mut rng)
            .unwrap()
            .0
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
    assert_eq!(a.replication, 7);
}

#[test]
fn front_office_only_keeps_every_task() {
    let c = CallCenterConfig::default();
    let mut rng = RngStream::new(5, 0);
    let (t, _) = run_replication(&c, &RewardSpec::original(), |_| ActionVector::all_front_office(4), &mut rng).unwrap();
    let last = t.records.last().unwrap();
    assert_eq!(last.kpis.backoffice, vec![5, 10, 5]);
    assert_eq!(terminal_reward(&last.kpis, &RewardSpec::original()), -400.0);
    assert_eq!(last.reward, compute_reward(&last.kpis, &RewardSpec::original()) - 400.0);
}

#[test]
fn random_policies_keep_the_invariants() {
    let c = CallCenterConfig::default();
    for rep in 0..20 {
        let mut rng = RngStream::new(17, rep);
        let mut policy_rng = RngStream::new(18, rep);
        let mut state = SystemState::new(&c).unwrap();
        let mut prev = vec![u32::MAX; 4];
        for _ in 0..c.horizon_epochs {
            let a = ActionVector::from_index(policy_rng.below(16), 4).unwrap();
            let (k, _) = state.step_epoch(&c, &a, &mut rng).unwrap();
            assert!(k.utilization.iter().all(|u| (0.0..=1.0).contains(u)));
            assert!(k.abandonment.iter().all(|u| (0.0..=1.0).contains(u)));
            assert!(k.waiting.iter().all(|&w| w >= 0.0));
            for (e, p) in state.experts().iter().zip(&mut prev) {
                assert!(e.remaining_tasks <= *p);
                assert!(e.busy_time_this_epoch <= 30.0 + 1e-9);
                *p = e.remaining_tasks;
            }
            assert_eq!(state.audit(), vec![]);
        }
    }
}

#[test]
fn env_contract() {
    let mut env = CallCenterEnv::new(CallCenterConfig::default(), RewardSpec::original()).unwrap();
    assert_eq!(env.num_actions(), 16);
    assert_eq!(env.observation_dim(), 7);
    assert_eq!(env.step(0).unwrap_err(), EnvError::NotReset);
    let obs = env.reset(RngStream::new(1, 0));
    assert_eq!(obs, vec![0.0, 0.0, 5.0, 10.0, 5.0, 0.0, 0.0]);
    let mut steps = 0;
    loop {
        let out = env.step(15).unwrap();
        steps += 1;
        if out.done {
            break;
        }
    }
    assert_eq!(steps, 16);
    assert_eq!(env.step(0).unwrap_err(), EnvError::EpisodeComplete);
    assert_eq!(env.step(16).unwrap_err(), EnvError::InvalidAction(16));
}

#[test]
fn action_index_is_lsb_first() {
    assert_eq!(ActionVector::from_bits(&[0, 0, 0, 0]).unwrap().to_index(), 0);
    assert_eq!(ActionVector::from_bits(&[1, 0, 1, 0]).unwrap().to_index(), 5);
    for i in 0..16 {
        assert_eq!(ActionVector::from_index(i, 4).unwrap().to_index(), i);
    }
    assert!(ActionVector::from_index(16, 4).is_none());
    assert!(ActionVector::from_bits(&[2]).is_none());
}
