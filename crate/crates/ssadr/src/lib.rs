//! Curriculum-learning laboratory for goal-directed control.
//!
//! Co-evolves two curricula from one self-supervised signal: an asymmetric
//! self-play game proposes goals at the frontier of the learner's ability,
//! while an interacting particle ensemble over the simulator's randomization
//! space proposes environment variations. Baseline regimes (uniform domain
//! randomization, self-play without randomization, discriminator-driven
//! randomization) share the same infrastructure for comparison.

pub mod adr;
pub mod approx;
pub mod cli;
pub mod config;
pub mod ddpg;
pub mod envs;
pub mod error;
pub mod metrics;
pub mod selfplay;
pub mod trainer;

pub use error::{Error, Result};
