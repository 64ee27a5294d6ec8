//! Benchmark environments with batched stepping and uniform state sampling.
//!
//! Both environments are pure transition functions: the state is a value
//! owned by the caller and every random effect draws from an explicit rng.

mod arm;
mod maze;

pub use arm::{ArmConfig, ArmEnv, ArmSignal, ArmState, ArmStep};
pub use maze::{Cell, MazeAction, MazeEnv, MazeState, MazeStep};

use crate::error::{config_err, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous { dim: usize, low: Vec<f64>, high: Vec<f64> },
}

/// Support of the uniform Monte-Carlo state sampler.
#[derive(Clone, Debug, PartialEq)]
pub enum Sampleable {
    /// Uniform over `cells` free cells times the two values of the bonus flag.
    MazeCells { cells: usize },
    /// Joint angles uniform over `[-pi, pi)^sections`, goal uniform in the
    /// workspace disc.
    ArmConfigurations { sections: usize, radius: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_space: ActionSpace,
    pub sampleable: Sampleable,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 {
            return config_err("state_dim must be at least 1");
        }
        match &self.action_space {
            ActionSpace::Discrete(n) if *n < 2 => config_err("a discrete action space needs at least 2 actions"),
            ActionSpace::Continuous { dim, low, high } => {
                if low.len() != *dim || high.len() != *dim {
                    return config_err("action bound length differs from action dimension");
                }
                if low.iter().zip(high).any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h)) {
                    return config_err("continuous action bounds must be finite with low < high");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn action_dim(&self) -> usize {
        match &self.action_space {
            ActionSpace::Discrete(_) => 1,
            ActionSpace::Continuous { dim, .. } => *dim,
        }
    }
}
