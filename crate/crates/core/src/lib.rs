//! Pure algorithmic core: seeded random streams, the event-calendar kernel,
//! the call-center environment, a small dense network, the DQN agent, the
//! generative surrogate and the training pipeline logic.
//!
//! Everything here is `no_std` with `alloc`; file formats, threads and the
//! command line live in the `surro-accel` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod callcenter;
pub mod descore;
pub mod dqn;
pub mod env;
pub mod neural;
pub mod pipeline;
pub mod stochastic;
pub mod surrogate;

use alloc::string::String;
use core::fmt;

/// A violated configuration invariant, located by its JSON path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl core::error::Error for ConfigError {}
