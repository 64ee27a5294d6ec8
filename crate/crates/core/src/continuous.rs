//! Continuous-control agents on the arm: UDDPG, EUDDPG and the DDPG baseline.
//!
//! The actor ends in `tanh` and is scaled by the action bound, so its raw
//! output `u` is the action as a fraction of the bound. The critic reads
//! `[observation, action / bound]`; for the actor objective that second block
//! is exactly `u`, which lets the critic's input gradient feed the actor's
//! backward pass directly.

use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::envspace::{ArmEnv, ArmState};
use crate::error::{config_err, shape_err, Result};
use crate::ndnet::{Activation, Direction, NetworkParams};
use crate::replay::{BatchFifo, RingBuffer, TransitionBatch};
use crate::rollout::{Diagnostics, Episode};

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub tau: f64,
    pub noise_variance_initial: f64,
    /// Multiplies the exploration variance after every training update.
    pub variance_decay: f64,
    pub batch_size: usize,
    pub minibatch_size: usize,
    pub minibatch_maximum: usize,
    pub replay_memory: usize,
    pub max_episode_steps: usize,
    pub hidden: Vec<usize>,
}

impl Default for ContinuousConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            learning_rate: 0.001,
            tau: 0.01,
            noise_variance_initial: 1.0,
            variance_decay: 0.9995,
            batch_size: 200,
            minibatch_size: 200,
            minibatch_maximum: 200,
            replay_memory: 30_000,
            max_episode_steps: 200,
            hidden: vec![64, 64],
        }
    }
}

impl ContinuousConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return config_err(format!("gamma {} outside (0, 1)", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return config_err(format!("tau {} outside [0, 1]", self.tau));
        }
        if !(self.variance_decay > 0.0 && self.variance_decay <= 1.0) {
            return config_err("variance_decay must lie in (0, 1]");
        }
        if !(self.noise_variance_initial >= 0.0 && self.learning_rate >= 0.0) {
            return config_err("noise variance and learning rate must be non-negative");
        }
        let sizes = [
            self.batch_size,
            self.minibatch_size,
            self.minibatch_maximum,
            self.replay_memory,
            self.max_episode_steps,
        ];
        if sizes.contains(&0) || self.hidden.contains(&0) {
            return config_err("sizes must be positive");
        }
        if self.replay_memory < self.batch_size.max(self.minibatch_size) {
            return config_err("replay memory smaller than one batch");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActorCritic {
    pub actor: NetworkParams,
    pub critic: NetworkParams,
    pub target_actor: NetworkParams,
    pub target_critic: NetworkParams,
    pub noise_variance: f64,
    pub action_bound: f64,
    pub update_counter: u64,
    pub fresh_sample_counter: u64,
}

impl ActorCritic {
    /// Targets start as copies of the current networks.
    pub fn new(obs_dim: usize, action_dim: usize, action_bound: f64, config: &ContinuousConfig, seed: u64) -> Result<Self> {
        if !(action_bound > 0.0 && action_bound.is_finite()) {
            return config_err("action bound must be positive");
        }
        let actor = NetworkParams::mlp(obs_dim, &config.hidden, action_dim, Activation::Tanh, seed)?;
        let critic = NetworkParams::mlp(obs_dim + action_dim, &config.hidden, 1, Activation::Identity, seed ^ 0x5bd1_e995)?;
        Self::from_networks(actor, critic, action_bound, config.noise_variance_initial)
    }

    pub fn from_networks(actor: NetworkParams, critic: NetworkParams, action_bound: f64, noise_variance: f64) -> Result<Self> {
        if critic.input_dim() != actor.input_dim() + actor.output_dim() || critic.output_dim() != 1 {
            return shape_err("critic must read [observation, action] and emit one value");
        }
        Ok(Self {
            target_actor: actor.hard_copy(),
            target_critic: critic.hard_copy(),
            actor,
            critic,
            noise_variance,
            action_bound,
            update_counter: 0,
            fresh_sample_counter: 0,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    /// Deterministic policy `bound * mu(s)`.
    pub fn policy(&self, obs: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.actor.forward(obs)? * self.action_bound)
    }

    /// `Q(s, a | critic)` for actions in environment units.
    pub fn q_value(&self, obs: &Array2<f64>, actions: &Array2<f64>) -> Result<Array2<f64>> {
        self.critic.forward(&critic_input(obs, actions, self.action_bound)?)
    }

    pub fn decay_noise(&mut self, config: &ContinuousConfig) {
        self.noise_variance = (self.noise_variance * config.variance_decay).max(0.0);
    }
}

fn critic_input(obs: &Array2<f64>, actions: &Array2<f64>, bound: f64) -> Result<Array2<f64>> {
    if obs.nrows() != actions.nrows() {
        return shape_err("observations and actions differ in row count");
    }
    let scaled = actions / bound;
    Ok(concatenate(Axis(1), &[obs.view(), scaled.view()]).expect("row counts match"))
}

/// Policy actions plus Gaussian noise of the current variance, before
/// clipping to the action bound.
pub fn perturbed_actions<R: Rng + ?Sized>(agent: &ActorCritic, obs: &Array2<f64>, rng: &mut R) -> Result<Array2<f64>> {
    let mut a = agent.policy(obs)?;
    let std = agent.noise_variance.sqrt();
    if std > 0.0 {
        a.iter_mut().for_each(|v| {
            let z: f64 = StandardNormal.sample(rng);
            *v += std * z;
        });
    }
    Ok(a)
}

/// Exploration actions: [`perturbed_actions`] clipped to `[-bound, bound]`.
pub fn noisy_actions<R: Rng + ?Sized>(agent: &ActorCritic, obs: &Array2<f64>, rng: &mut R) -> Result<Array2<f64>> {
    let b = agent.action_bound;
    Ok(perturbed_actions(agent, obs, rng)?.mapv(|v| v.clamp(-b, b)))
}

/// Gradient of `J = mean_n Q(s_n, mu(s_n))` with respect to the actor,
/// chained through the critic's input gradient. Returns `(J, grads)`.
pub fn actor_objective(agent: &ActorCritic, obs: &Array2<f64>) -> Result<(f64, crate::ndnet::Gradients)> {
    let n = obs.nrows();
    if n == 0 {
        return shape_err("empty state batch");
    }
    let actor_cache = agent.actor.forward_cached(obs)?;
    let u = actor_cache.output();
    let input = concatenate(Axis(1), &[obs.view(), u.view()]).expect("row counts match");
    let critic_cache = agent.critic.forward_cached(&input)?;
    let j = critic_cache.output().mean().expect("non-empty");
    let upstream = Array2::from_elem((n, 1), 1.0 / n as f64);
    let (_, input_grad) = agent.critic.backward_cached(&critic_cache, &upstream)?;
    let du = input_grad.slice(s![.., agent.obs_dim()..]).to_owned();
    let (grads, _) = agent.actor.backward_cached(&actor_cache, &du)?;
    Ok((j, grads))
}

/// One ascent step on the actor objective with the critic held fixed.
pub fn actor_update(agent: &mut ActorCritic, obs: &Array2<f64>, config: &ContinuousConfig) -> Result<f64> {
    let (j, grads) = actor_objective(agent, obs)?;
    agent.actor.sgd_step(&grads, config.learning_rate, Direction::Ascend)?;
    Ok(j)
}

#[derive(Clone, Debug)]
pub struct CriticEval {
    pub loss: f64,
    pub grads: crate::ndnet::Gradients,
    pub mean_target_q: f64,
}

/// Squared Bellman error of the critic against the target actor and critic;
/// terminal (success or reset) transitions do not bootstrap.
pub fn critic_loss_and_grads(agent: &ActorCritic, batch: &TransitionBatch, gamma: f64) -> Result<CriticEval> {
    let n = batch.len();
    if n == 0 {
        return shape_err("empty batch");
    }
    let next_actions = agent.target_actor.forward(&batch.next_states)?;
    let next_input = concatenate(Axis(1), &[batch.next_states.view(), next_actions.view()]).expect("rows match");
    let q_next = agent.target_critic.forward(&next_input)?;
    let cache = agent.critic.forward_cached(&critic_input(&batch.states, &batch.actions, agent.action_bound)?)?;
    let q = cache.output();
    let mut upstream = Array2::zeros((n, 1));
    let mut loss = 0.0;
    for i in 0..n {
        let bootstrap = if batch.terminal[i] { 0.0 } else { q_next[[i, 0]] };
        let diff = q[[i, 0]] - (batch.rewards[i] + gamma * bootstrap);
        loss += diff * diff;
        upstream[[i, 0]] = 2.0 * diff / n as f64;
    }
    let (grads, _) = agent.critic.backward_cached(&cache, &upstream)?;
    Ok(CriticEval { loss: loss / n as f64, grads, mean_target_q: q_next.mean().expect("non-empty") })
}

/// One descent step on the critic loss; returns `(loss, mean_target_q)`.
pub fn critic_update(agent: &mut ActorCritic, batch: &TransitionBatch, config: &ContinuousConfig) -> Result<(f64, f64)> {
    let eval = critic_loss_and_grads(agent, batch, config.gamma)?;
    agent.critic.sgd_step(&eval.grads, config.learning_rate, Direction::Descend)?;
    Ok((eval.loss, eval.mean_target_q))
}

pub fn soft_update_targets(agent: &mut ActorCritic, tau: f64) -> Result<()> {
    agent.target_actor.soft_update(&agent.actor, tau)?;
    agent.target_critic.soft_update(&agent.critic, tau)
}

/// Actor ascent, critic descent, then soft target updates.
fn train_on(agent: &mut ActorCritic, batch: &TransitionBatch, config: &ContinuousConfig) -> Result<(f64, f64)> {
    actor_update(agent, &batch.states, config)?;
    let (loss, q) = critic_update(agent, batch, config)?;
    soft_update_targets(agent, config.tau)?;
    agent.decay_noise(config);
    agent.update_counter += 1;
    Ok((loss, q))
}

fn batch_from_steps(env: &ArmEnv, obs: Array2<f64>, actions: Array2<f64>, states: &[ArmState], rng: &mut (impl Rng + ?Sized)) -> Result<TransitionBatch> {
    let steps = env.step_batch(states, &actions, rng);
    let next: Vec<ArmState> = steps.iter().map(|s| s.next.clone()).collect();
    TransitionBatch::new(
        obs,
        actions,
        steps.iter().map(|s| s.reward).collect(),
        env.observe_batch(&next),
        steps.iter().map(|s| s.signal.is_terminal()).collect(),
    )
}

fn collect_batch<R: Rng + ?Sized>(agent: &ActorCritic, env: &ArmEnv, n: usize, rng: &mut R) -> Result<TransitionBatch> {
    let states = env.sample_states(n, rng);
    let obs = env.observe_batch(&states);
    let actions = noisy_actions(agent, &obs, rng)?;
    batch_from_steps(env, obs, actions, &states, rng)
}

/// One UDDPG update on a fresh batch of uniformly sampled arm states.
pub fn uddpg_iteration<R: Rng + ?Sized>(
    agent: &mut ActorCritic,
    env: &ArmEnv,
    config: &ContinuousConfig,
    rng: &mut R,
) -> Result<Diagnostics> {
    let batch = collect_batch(agent, env, config.batch_size, rng)?;
    agent.fresh_sample_counter += config.batch_size as u64;
    let (loss, q) = train_on(agent, &batch, config)?;
    Ok(Diagnostics { updates: 1, fresh_samples: config.batch_size, loss, mean_target_q: q })
}

/// One EUDDPG cycle; trains only once the batch memory is full.
pub fn euddpg_cycle<R: Rng + ?Sized>(
    agent: &mut ActorCritic,
    env: &ArmEnv,
    fifo: &mut BatchFifo,
    config: &ContinuousConfig,
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
        let (loss, q) = train_on(agent, &mb, config)?;
        losses.push(loss);
        qs.push(q);
    }
    fifo.pop_oldest()?;
    Ok(Diagnostics::averaged(config.batch_size, &losses, &qs))
}

#[derive(Clone, Debug)]
pub struct DdpgMemory {
    pub ring: RingBuffer,
    pub episode: Episode<ArmState>,
}

impl DdpgMemory {
    pub fn new(env: &ArmEnv, config: &ContinuousConfig) -> Self {
        Self {
            ring: RingBuffer::new(config.replay_memory, env.observation_dim(), env.sections()),
            episode: Episode::default(),
        }
    }
}

/// One environment step of DDPG and, once a mini-batch is available, one
/// training update. Episodes restart from a uniform state on success,
/// slip-out, or after `max_episode_steps`.
pub fn ddpg_step<R: Rng + ?Sized>(
    agent: &mut ActorCritic,
    env: &ArmEnv,
    memory: &mut DdpgMemory,
    config: &ContinuousConfig,
    rng: &mut R,
) -> Result<Diagnostics> {
    let state = match memory.episode.state.take() {
        Some(s) => s,
        None => env.sample_state(rng),
    };
    let obs = env.observe_batch(std::slice::from_ref(&state));
    let action = noisy_actions(agent, &obs, rng)?;
    let step = env.step(&state, action.as_slice().expect("standard layout"), rng);
    memory.ring.push(
        obs.as_slice().expect("standard layout"),
        action.as_slice().expect("standard layout"),
        step.reward,
        &env.observe(&step.next),
        step.signal.is_terminal(),
    )?;
    agent.fresh_sample_counter += 1;
    memory.episode.steps += 1;
    if step.signal.is_terminal() || memory.episode.steps >= config.max_episode_steps {
        memory.episode.finish();
    } else {
        memory.episode.state = Some(step.next);
    }
    if memory.ring.len() < config.minibatch_size {
        return Ok(Diagnostics::idle(1));
    }
    let mb = memory.ring.sample_minibatch(config.minibatch_size, rng)?;
    let (loss, q) = train_on(agent, &mb, config)?;
    Ok(Diagnostics { updates: 1, fresh_samples: 1, loss, mean_target_q: q })
}
