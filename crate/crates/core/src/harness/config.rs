use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::continuous::ContinuousConfig;
use crate::discrete::AgentConfig;
use crate::envspace::{ArmConfig, ArmEnv, MazeEnv};
use crate::error::{config_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvKind {
    Maze,
    Arm,
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maze" => Ok(Self::Maze),
            "arm" => Ok(Self::Arm),
            other => config_err(format!("unknown environment `{other}`")),
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Maze => "maze",
            Self::Arm => "arm",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Dqn,
    Udqn,
    Eudqn,
    Ddpg,
    Uddpg,
    Euddpg,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [Self::Dqn, Self::Udqn, Self::Eudqn, Self::Ddpg, Self::Uddpg, Self::Euddpg];

    pub fn name(self) -> &'static str {
        match self {
            Self::Dqn => "dqn",
            Self::Udqn => "udqn",
            Self::Eudqn => "eudqn",
            Self::Ddpg => "ddpg",
            Self::Uddpg => "uddpg",
            Self::Euddpg => "euddpg",
        }
    }

    pub fn env(self) -> EnvKind {
        match self {
            Self::Dqn | Self::Udqn | Self::Eudqn => EnvKind::Maze,
            _ => EnvKind::Arm,
        }
    }

    /// True for the agents that train on uniformly sampled batches.
    pub fn is_unbiased(self) -> bool {
        !matches!(self, Self::Dqn | Self::Ddpg)
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything needed to reproduce one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub algo: Algorithm,
    pub rows: usize,
    pub cols: usize,
    pub sections: usize,
    pub discrete: AgentConfig,
    pub continuous: ContinuousConfig,
    /// Parameter updates to perform.
    pub updates: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub eval_timeout: usize,
    /// Set to false to skip evaluations entirely (used by isolation checks).
    pub evaluate: bool,
    /// Write per-update wall time into metrics.csv. Off by default so the
    /// file stays reproducible byte for byte.
    pub record_timing: bool,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn maze(rows: usize, cols: usize, algo: Algorithm) -> Self {
        Self {
            env: EnvKind::Maze,
            algo,
            rows,
            cols,
            sections: 2,
            discrete: AgentConfig::default(),
            continuous: ContinuousConfig::default(),
            updates: 80_000,
            eval_interval: 100,
            eval_episodes: 100,
            eval_timeout: 200,
            evaluate: true,
            record_timing: false,
            seed: 0,
            out_dir: None,
        }
    }

    pub fn arm(sections: usize, algo: Algorithm) -> Self {
        Self {
            env: EnvKind::Arm,
            sections,
            updates: 50_000,
            eval_interval: 500,
            eval_timeout: 100,
            ..Self::maze(9, 9, algo)
        }
    }

    pub fn defaults(env: EnvKind) -> Self {
        match env {
            EnvKind::Maze => Self::maze(9, 9, Algorithm::Udqn),
            EnvKind::Arm => Self::arm(2, Algorithm::Uddpg),
        }
    }

    /// Builds a config from ordered `key = value` pairs. The last `env` pair
    /// picks the defaults; the remaining pairs are applied in order.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let env = match pairs.iter().rev().find(|(k, _)| k == "env") {
            Some((_, v)) => v.parse()?,
            None => EnvKind::Maze,
        };
        let mut cfg = Self::defaults(env);
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Sets one field by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
        }
        // Keys shared by both tables go to the selected environment's agent.
        let maze = self.env == EnvKind::Maze;
        let d = &mut self.discrete;
        let c = &mut self.continuous;
        match key {
            "env" => self.env = value.parse()?,
            "algo" => self.algo = value.parse()?,
            "rows" => self.rows = num(key, value)?,
            "cols" => self.cols = num(key, value)?,
            "sections" => self.sections = num(key, value)?,
            "updates" => self.updates = num(key, value)?,
            "eval_interval" => self.eval_interval = num(key, value)?,
            "eval_episodes" => self.eval_episodes = num(key, value)?,
            "eval_timeout" => self.eval_timeout = num(key, value)?,
            "evaluate" => self.evaluate = num(key, value)?,
            "record_timing" => self.record_timing = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "out" => self.out_dir = Some(PathBuf::from(value)),
            "learning_rate" if maze => d.learning_rate = num(key, value)?,
            "learning_rate" => c.learning_rate = num(key, value)?,
            "discount_factor" if maze => d.gamma = num(key, value)?,
            "discount_factor" => c.gamma = num(key, value)?,
            "batch_size" if maze => d.batch_size = num(key, value)?,
            "batch_size" => c.batch_size = num(key, value)?,
            "mini_batch_size" if maze => d.minibatch_size = num(key, value)?,
            "mini_batch_size" => c.minibatch_size = num(key, value)?,
            "mini_batch_maximum" if maze => d.minibatch_maximum = num(key, value)?,
            "mini_batch_maximum" => c.minibatch_maximum = num(key, value)?,
            "replay_memory_size" if maze => d.replay_memory = num(key, value)?,
            "replay_memory_size" => c.replay_memory = num(key, value)?,
            "maximum_episode_steps" if maze => d.max_episode_steps = num(key, value)?,
            "maximum_episode_steps" => c.max_episode_steps = num(key, value)?,
            "hidden_layers" => {
                let hidden = value
                    .split(',')
                    .map(|h| num::<usize>(key, h.trim()))
                    .collect::<Result<Vec<_>>>()?;
                if maze {
                    d.hidden = hidden;
                } else {
                    c.hidden = hidden;
                }
            }
            "initial_exploration_rate" => d.epsilon_initial = num(key, value)?,
            "final_exploration_rate" => d.epsilon_final = num(key, value)?,
            "exploration_decay" => d.epsilon_decay = num(key, value)?,
            "observation_size" => d.observation_size = num(key, value)?,
            "target_update_period" => d.dqn_target_period = num(key, value)?,
            "initial_exploration_variance" => c.noise_variance_initial = num(key, value)?,
            "variance_decay_rate" => c.variance_decay = num(key, value)?,
            "soft_update_parameter" => c.tau = num(key, value)?,
            other => return config_err(format!("unknown config key `{other}`")),
        }
        Ok(())
    }

    /// Renders the config in the file format read by [`parse_config_text`].
    pub fn to_text(&self) -> String {
        let d = &self.discrete;
        let c = &self.continuous;
        let hidden = if self.env == EnvKind::Maze { &d.hidden } else { &c.hidden };
        let hidden: Vec<String> = hidden.iter().map(|h| h.to_string()).collect();
        let mut lines = vec![
            format!("env = {}", self.env),
            format!("algo = {}", self.algo),
            format!("rows = {}", self.rows),
            format!("cols = {}", self.cols),
            format!("sections = {}", self.sections),
            format!("updates = {}", self.updates),
            format!("eval_interval = {}", self.eval_interval),
            format!("eval_episodes = {}", self.eval_episodes),
            format!("eval_timeout = {}", self.eval_timeout),
            format!("evaluate = {}", self.evaluate),
            format!("record_timing = {}", self.record_timing),
            format!("seed = {}", self.seed),
            format!("hidden_layers = {}", hidden.join(",")),
        ];
        if self.env == EnvKind::Maze {
            lines.extend([
                format!("learning_rate = {}", d.learning_rate),
                format!("discount_factor = {}", d.gamma),
                format!("initial_exploration_rate = {}", d.epsilon_initial),
                format!("final_exploration_rate = {}", d.epsilon_final),
                format!("exploration_decay = {}", d.epsilon_decay),
                format!("observation_size = {}", d.observation_size),
                format!("batch_size = {}", d.batch_size),
                format!("mini_batch_size = {}", d.minibatch_size),
                format!("mini_batch_maximum = {}", d.minibatch_maximum),
                format!("replay_memory_size = {}", d.replay_memory),
                format!("target_update_period = {}", d.dqn_target_period),
                format!("maximum_episode_steps = {}", d.max_episode_steps),
            ]);
        } else {
            lines.extend([
                format!("learning_rate = {}", c.learning_rate),
                format!("discount_factor = {}", c.gamma),
                format!("initial_exploration_variance = {}", c.noise_variance_initial),
                format!("variance_decay_rate = {}", c.variance_decay),
                format!("soft_update_parameter = {}", c.tau),
                format!("maximum_episode_steps = {}", c.max_episode_steps),
                format!("batch_size = {}", c.batch_size),
                format!("mini_batch_size = {}", c.minibatch_size),
                format!("mini_batch_maximum = {}", c.minibatch_maximum),
                format!("replay_memory_size = {}", c.replay_memory),
            ]);
        }
        lines.join("\n") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        if self.updates == 0 || self.eval_interval == 0 || self.eval_episodes == 0 || self.eval_timeout == 0 {
            return config_err("updates, eval_interval, eval_episodes and eval_timeout must be positive");
        }
        if self.algo.env() != self.env {
            return config_err(format!("algorithm {} does not run on the {} environment", self.algo, self.env));
        }
        match self.env {
            EnvKind::Maze => {
                MazeEnv::new(self.rows, self.cols)?;
                self.discrete.validate()
            }
            EnvKind::Arm => {
                ArmEnv::new(&ArmConfig::new(self.sections), 0)?;
                self.continuous.validate()
            }
        }
    }
}

/// Splits flat `key = value` text into ordered pairs. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected `key = value`, got `{line}`") })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}
