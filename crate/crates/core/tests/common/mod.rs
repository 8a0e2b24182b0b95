#![allow(dead_code)]

pub mod fd_oracle;
pub mod mm1;
pub mod tiny_mdp;
