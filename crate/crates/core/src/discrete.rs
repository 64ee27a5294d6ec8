//! Discrete-action agents on the maze: UDQN, EUDQN and the DQN baseline.
//!
//! All three minimize the same squared Bellman error
//! `mean_n (r_n + gamma * max_a' Q(s'_n, a' | target) - Q(s_n, a_n | current))^2`
//! and differ only in where the samples come from:
//!
//! * UDQN draws a fresh batch of uniformly sampled states every update and
//!   uses the previous iterate as its target.
//! * EUDQN keeps the most recent batches in a [`BatchFifo`] and runs several
//!   mini-batch updates per fresh batch.
//! * DQN follows episodes, stores single steps in a [`RingBuffer`] and copies
//!   its target network periodically.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::envspace::{MazeEnv, MazeState};
use crate::error::{config_err, shape_err, Result};
use crate::ndnet::{Activation, Direction, Gradients, NetworkParams};
use crate::replay::{BatchFifo, RingBuffer, TransitionBatch};
use crate::rollout::{Diagnostics, Episode};

pub const NUM_ACTIONS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub epsilon_initial: f64,
    pub epsilon_final: f64,
    /// Multiplicative decay applied after every parameter update.
    pub epsilon_decay: f64,
    /// Fresh samples per UDQN update and per EUDQN batch.
    pub batch_size: usize,
    /// Samples per update drawn from a memory (DQN, EUDQN).
    pub minibatch_size: usize,
    /// EUDQN updates per stored batch.
    pub minibatch_maximum: usize,
    pub replay_memory: usize,
    /// Transitions DQN collects before its first update.
    pub observation_size: usize,
    pub dqn_target_period: usize,
    pub max_episode_steps: usize,
    pub hidden: Vec<usize>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            learning_rate: 0.001,
            epsilon_initial: 0.9,
            epsilon_final: 0.0001,
            epsilon_decay: 0.9999,
            batch_size: 200,
            minibatch_size: 200,
            minibatch_maximum: 200,
            replay_memory: 10_000,
            observation_size: 2500,
            dqn_target_period: 200,
            max_episode_steps: 200,
            hidden: vec![64, 64],
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return config_err(format!("gamma {} outside (0, 1)", self.gamma));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return config_err("learning rate must be finite and non-negative");
        }
        if !(0.0 <= self.epsilon_final && self.epsilon_final <= self.epsilon_initial && self.epsilon_initial <= 1.0) {
            return config_err("need 0 <= epsilon_final <= epsilon_initial <= 1");
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return config_err("epsilon_decay must lie in (0, 1]");
        }
        let sizes = [
            self.batch_size,
            self.minibatch_size,
            self.minibatch_maximum,
            self.replay_memory,
            self.dqn_target_period,
            self.max_episode_steps,
        ];
        if sizes.contains(&0) || self.hidden.contains(&0) {
            return config_err("sizes must be positive");
        }
        if self.replay_memory < self.batch_size {
            return config_err("replay memory smaller than one batch");
        }
        if self.observation_size.max(self.minibatch_size) > self.replay_memory {
            return config_err("observation size and mini-batch must fit the replay memory");
        }
        Ok(())
    }
}

/// Q network, its target copy, exploration rate and sample accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct QAgent {
    pub current: NetworkParams,
    pub target: NetworkParams,
    pub epsilon: f64,
    pub update_counter: u64,
    pub fresh_sample_counter: u64,
}

impl QAgent {
    pub fn new(state_dim: usize, config: &AgentConfig, seed: u64) -> Result<Self> {
        let current = NetworkParams::mlp(state_dim, &config.hidden, NUM_ACTIONS, Activation::Identity, seed)?;
        Ok(Self {
            target: current.hard_copy(),
            current,
            epsilon: config.epsilon_initial,
            update_counter: 0,
            fresh_sample_counter: 0,
        })
    }

    pub fn q_values(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        self.current.forward(features)
    }

    /// Greedy actions of the current network.
    pub fn greedy(&self, env: &MazeEnv, states: &[MazeState]) -> Result<Vec<usize>> {
        let q = self.current.forward(&env.encode_batch(states))?;
        Ok(q.rows().into_iter().map(|r| argmax(r.iter().copied())).collect())
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn epsilon_greedy_from_q<R: Rng + ?Sized>(q: &Array2<f64>, epsilon: f64, rng: &mut R) -> Vec<usize> {
    q.rows()
        .into_iter()
        .map(|row| {
            if rng.random::<f64>() < epsilon {
                rng.random_range(0..row.len())
            } else {
                argmax(row.iter().copied())
            }
        })
        .collect()
}

pub fn epsilon_greedy<R: Rng + ?Sized>(
    agent: &QAgent,
    env: &MazeEnv,
    states: &[MazeState],
    rng: &mut R,
) -> Result<Vec<usize>> {
    let q = agent.current.forward(&env.encode_batch(states))?;
    Ok(epsilon_greedy_from_q(&q, agent.epsilon, rng))
}

pub fn decay_epsilon(agent: &mut QAgent, config: &AgentConfig) {
    agent.epsilon = (agent.epsilon * config.epsilon_decay).max(config.epsilon_final);
}

#[derive(Clone, Debug)]
pub struct LossEval {
    pub loss: f64,
    pub grads: Gradients,
    /// `mean_n max_a' Q(s'_n, a' | target)`, terminal samples included.
    pub mean_target_q: f64,
}

/// Squared Bellman error of `current` against a frozen `target`; gradients
/// flow through `current` only and terminal next states do not bootstrap.
pub fn udqn_loss_and_grads(
    current: &NetworkParams,
    target: &NetworkParams,
    batch: &TransitionBatch,
    gamma: f64,
) -> Result<LossEval> {
    let n = batch.len();
    if n == 0 {
        return shape_err("empty batch");
    }
    if batch.action_dim() != 1 {
        return shape_err("discrete batches carry one action column");
    }
    let q_next = target.forward(&batch.next_states)?;
    let max_next: Array1<f64> = q_next.rows().into_iter().map(|r| r.fold(f64::NEG_INFINITY, |m, &v| m.max(v))).collect();
    let cache = current.forward_cached(&batch.states)?;
    let q = cache.output();
    let mut upstream = Array2::zeros(q.dim());
    let mut loss = 0.0;
    for i in 0..n {
        let a = batch.actions[[i, 0]] as usize;
        if a >= q.ncols() {
            return shape_err(format!("action {a} out of range"));
        }
        let bootstrap = if batch.terminal[i] { 0.0 } else { max_next[i] };
        let diff = q[[i, a]] - (batch.rewards[i] + gamma * bootstrap);
        loss += diff * diff;
        upstream[[i, a]] = 2.0 * diff / n as f64;
    }
    let (grads, _) = current.backward_cached(&cache, &upstream)?;
    Ok(LossEval { loss: loss / n as f64, grads, mean_target_q: max_next.mean().unwrap_or(0.0) })
}

/// Gradient step on the Bellman error; returns `(loss, mean_target_q)`.
fn train_on(agent: &mut QAgent, batch: &TransitionBatch, config: &AgentConfig) -> Result<(f64, f64)> {
    let eval = udqn_loss_and_grads(&agent.current, &agent.target, batch, config.gamma)?;
    agent.current.sgd_step(&eval.grads, config.learning_rate, Direction::Descend)?;
    agent.update_counter += 1;
    decay_epsilon(agent, config);
    Ok((eval.loss, eval.mean_target_q))
}

/// Samples `n` uniform states, acts epsilon-greedily and steps them once.
fn collect_batch<R: Rng + ?Sized>(agent: &QAgent, env: &MazeEnv, n: usize, rng: &mut R) -> Result<TransitionBatch> {
    let states = env.sample_states(n, rng);
    let features = env.encode_batch(&states);
    let q = agent.current.forward(&features)?;
    let actions = epsilon_greedy_from_q(&q, agent.epsilon, rng);
    let steps = env.step_batch(&states, &actions);
    let next: Vec<MazeState> = steps.iter().map(|s| s.next).collect();
    TransitionBatch::new(
        features,
        Array2::from_shape_fn((n, 1), |(i, _)| actions[i] as f64),
        steps.iter().map(|s| s.reward).collect(),
        env.encode_batch(&next),
        steps.iter().map(|s| s.done).collect(),
    )
}

/// One UDQN update on a fresh batch of `batch_size` uniformly sampled states.
pub fn udqn_iteration<R: Rng + ?Sized>(
    agent: &mut QAgent,
    env: &MazeEnv,
    config: &AgentConfig,
    rng: &mut R,
) -> Result<Diagnostics> {
    let batch = collect_batch(agent, env, config.batch_size, rng)?;
    agent.fresh_sample_counter += config.batch_size as u64;
    agent.target.copy_from(&agent.current)?;
    let (loss, q) = train_on(agent, &batch, config)?;
    Ok(Diagnostics { updates: 1, fresh_samples: config.batch_size, loss, mean_target_q: q })
}

/// One EUDQN cycle: store a fresh batch and, once the memory is full, run
/// `minibatch_maximum` mini-batch updates and drop the oldest batch.
pub fn eudqn_cycle<R: Rng + ?Sized>(
    agent: &mut QAgent,
    env: &MazeEnv,
    fifo: &mut BatchFifo,
    config: &AgentConfig,
    rng: &mut R,
) -> Result<Diagnostics> {
    let batch = collect_batch(agent, env, config.batch_size, rng)?;
    fifo.push(batch)?;
    agent.fresh_sample_counter += config.batch_size as u64;
    if !fifo.is_full() {
        return Ok(Diagnostics::idle(config.batch_size));
    }
    let mut losses = Vec::with_capacity(config.minibatch_maximum);
    let mut qs = Vec::with_capacity(config.minibatch_maximum);
    for _ in 0..config.minibatch_maximum {
        let mb = fifo.sample_minibatch(config.minibatch_size, rng)?;
        agent.target.copy_from(&agent.current)?;
        let (loss, q) = train_on(agent, &mb, config)?;
        losses.push(loss);
        qs.push(q);
    }
    fifo.pop_oldest()?;
    Ok(Diagnostics::averaged(config.batch_size, &losses, &qs))
}

/// Experience-replay memory and episode cursor of the DQN baseline.
#[derive(Clone, Debug)]
pub struct DqnMemory {
    pub ring: RingBuffer,
    pub episode: Episode<MazeState>,
}

impl DqnMemory {
    pub fn new(config: &AgentConfig) -> Self {
        Self { ring: RingBuffer::new(config.replay_memory, 3, 1), episode: Episode::default() }
    }
}

/// One environment step of DQN, followed by one mini-batch update once
/// `observation_size` transitions are stored. Episodes restart from a
/// uniformly sampled state after reaching the goal or `max_episode_steps`.
pub fn dqn_step<R: Rng + ?Sized>(
    agent: &mut QAgent,
    env: &MazeEnv,
    memory: &mut DqnMemory,
    config: &AgentConfig,
    rng: &mut R,
) -> Result<Diagnostics> {
    let state = match memory.episode.state {
        Some(s) => s,
        None => env.sample_states(1, rng)[0],
    };
    let features = env.encode(&state);
    let q = agent.current.forward(&Array2::from_shape_vec((1, 3), features.to_vec()).expect("1x3"))?;
    let action = epsilon_greedy_from_q(&q, agent.epsilon, rng)[0];
    let step = env.step_batch(&[state], &[action])[0];
    memory.ring.push(&features, &[action as f64], step.reward, &env.encode(&step.next), step.done)?;
    agent.fresh_sample_counter += 1;
    memory.episode.steps += 1;
    if step.done || memory.episode.steps >= config.max_episode_steps {
        memory.episode.finish();
    } else {
        memory.episode.state = Some(step.next);
    }
    if memory.ring.len() < config.observation_size.max(config.minibatch_size) {
        return Ok(Diagnostics::idle(1));
    }
    let mb = memory.ring.sample_minibatch(config.minibatch_size, rng)?;
    let (loss, q) = train_on(agent, &mb, config)?;
    if agent.update_counter.is_multiple_of(config.dqn_target_period as u64) {
        agent.target.copy_from(&agent.current)?;
    }
    Ok(Diagnostics { updates: 1, fresh_samples: 1, loss, mean_target_q: q })
}
