//! A two-state, two-action deterministic MDP whose optimal policy is not
//! myopic, and its value-iteration oracle.

use surro_accel_core::dqn::{argmax, DqnAgent, DqnConfig, LearningCurve, Phase};
use surro_accel_core::env::{Backend, EnvError, Environment, StepOutcome};
use surro_accel_core::stochastic::RngStream;

/// `(next_state, reward)` for every `(state, action)`.
/// s0: a0 -> s1 (0), a1 -> s0 (+1)   s1: a0 -> s0 (+5), a1 -> s1 (0)
const DYNAMICS: [[(usize, f64); 2]; 2] = [[(1, 0.0), (0, 1.0)], [(0, 5.0), (1, 0.0)]];
pub const GAMMA: f64 = 0.9;
const HORIZON: usize = 10;

pub fn one_hot(s: usize) -> Vec<f64> {
    let mut v = vec![0.0; 2];
    v[s] = 1.0;
    v
}

/// Continuing task cut into fixed-length episodes; transitions are never
/// terminal, so the discounted infinite-horizon optimum applies.
pub struct TinyMdp {
    pub state: usize,
    pub steps: usize,
}

impl Environment for TinyMdp {
    fn observation_dim(&self) -> usize {
        2
    }
    fn num_actions(&self) -> usize {
        2
    }
    fn horizon(&self) -> usize {
        HORIZON
    }
    fn backend(&self) -> Backend {
        Backend::Simulation
    }
    fn reset(&mut self, mut stream: RngStream) -> Vec<f64> {
        self.state = stream.below(2);
        self.steps = 0;
        one_hot(self.state)
    }
    fn step(&mut self, action: usize) -> Result<StepOutcome, EnvError> {
        if action > 1 {
            return Err(EnvError::InvalidAction(action));
        }
        let (next, reward) = DYNAMICS[self.state][action];
        self.state = next;
        self.steps += 1;
        Ok(StepOutcome {
            observation: one_hot(next),
            reward,
            done: false,
        })
    }
    fn observe(&self) -> Result<Vec<f64>, EnvError> {
        Ok(one_hot(self.state))
    }
}

pub fn value_iteration() -> [usize; 2] {
    let mut v = [0.0f64; 2];
    for _ in 0..1000 {
        let mut next = [0.0; 2];
        for s in 0..2 {
            next[s] = (0..2)
                .map(|a| {
                    let (s2, r) = DYNAMICS[s][a];
                    r + GAMMA * v[s2]
                })
                .fold(f64::NEG_INFINITY, f64::max);
        }
        v = next;
    }
    let mut policy = [0; 2];
    for s in 0..2 {
        let q: Vec<f64> = (0..2)
            .map(|a| {
                let (s2, r) = DYNAMICS[s][a];
                r + GAMMA * v[s2]
            })
            .collect();
        policy[s] = argmax(&q);
    }
    policy
}

pub fn tiny_mdp_config() -> DqnConfig {
    DqnConfig {
        learning_rate: 1e-2,
        replay_capacity: 300,
        minibatch: 16,
        epsilon: 0.3,
        gamma: GAMMA,
        hidden: vec![16, 16],
        target_sync_period: 25,
        episodes: 50,
        reward_scale: 0.1,
    }
}

/// Trains on the MDP with `seed`; returns the greedy policy and the number
/// of gradient steps taken.
pub fn solve(seed: u64) -> ([usize; 2], u64) {
    let cfg = tiny_mdp_config();
    let mut env = TinyMdp { state: 0, steps: 0 };
    let mut agent = DqnAgent::new(cfg.clone(), 2, 2, seed).unwrap();
    let mut curve = LearningCurve::default();
    agent
        .run_episodes(&mut env, cfg.episodes, Phase::Direct, &mut curve, |k| RngStream::new(seed, k))
        .unwrap();
    let q = |s| argmax(&agent.qnet().predict(&one_hot(s)).unwrap());
    ([q(0), q(1)], agent.gradient_steps())
}
