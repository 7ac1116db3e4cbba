//! Seedable adversarial reinforcement-learning arena: a capture-the-flag
//! game on a simulated SDN topology, DDQN and NEC2DQN learners, a
//! white-box experience-poisoning attack and an experiment harness.

pub mod agents;
pub mod env;
pub mod error;
pub mod harness;
pub mod neural;
pub mod poison;
pub mod topology;

pub use error::{Error, Result};
