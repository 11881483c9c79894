//! Multi-state temporal-difference learning.
//!
//! The crate provides the multi-state TD (MSTD) target, which averages the
//! `l`-step TD targets for `l = 1..L` so that the Q values of several
//! subsequent states enter the regression target; a replay buffer that stores
//! fixed-length multi-state windows with termination padding; DDPG and SAC
//! agents in single-step, multi-step and multi-state variants; and an exact
//! convergence lab for tabular MSTD Q-learning on finite MDPs.

pub mod agents;
pub mod buffer;
pub mod envs;
pub mod harness;
pub mod lab;
pub mod mdp;
pub mod nn;
pub mod targets;
