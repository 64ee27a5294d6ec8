//! Uniformly sampled batch deep Q-learning and DDPG, their replay-based baselines, a maze and a planar arm.

pub mod continuous;
pub mod discrete;
pub mod envspace;
pub mod error;
pub mod harness;
pub mod ndnet;
pub mod replay;
pub mod rollout;

pub use error::{Error, Result};
