use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::continuous::ActorCritic;
use crate::discrete::QAgent;
use crate::envspace::{ArmEnv, ArmSignal, ArmState, MazeAction, MazeEnv, MazeState};
use crate::error::{config_err, shape_err, Result};

/// A deterministic maze controller.
pub trait MazePolicy {
    fn act(&self, env: &MazeEnv, state: &MazeState) -> Result<MazeAction>;
}

impl MazePolicy for QAgent {
    fn act(&self, env: &MazeEnv, state: &MazeState) -> Result<MazeAction> {
        let a = self.greedy(env, std::slice::from_ref(state))?[0];
        Ok(MazeAction::from_index(a).expect("four actions"))
    }
}

/// Adapts a plain function into a [`MazePolicy`].
pub struct FnPolicy<F>(pub F);

impl<F: Fn(&MazeState) -> MazeAction> MazePolicy for FnPolicy<F> {
    fn act(&self, _env: &MazeEnv, state: &MazeState) -> Result<MazeAction> {
        Ok((self.0)(state))
    }
}

/// A noiseless arm controller acting on a batch of observations.
pub trait ArmPolicy {
    fn act(&self, observations: &Array2<f64>) -> Result<Array2<f64>>;
}

impl ArmPolicy for ActorCritic {
    fn act(&self, observations: &Array2<f64>) -> Result<Array2<f64>> {
        self.policy(observations)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOutcome {
    /// Mean over episodes of accumulated reward divided by steps used.
    pub avg_reward: f64,
    pub episodes: usize,
    pub mean_steps: f64,
    /// Fraction of episodes that ended at the goal or with a completed grasp.
    pub success_rate: f64,
}

/// Greedy rollouts from the start cell. The policy is deterministic, so
/// every episode is the same rollout; it is computed once.
pub fn evaluate_maze<P: MazePolicy + ?Sized>(
    policy: &P,
    env: &MazeEnv,
    episodes: usize,
    timeout: usize,
) -> Result<EvalOutcome> {
    if episodes == 0 || timeout == 0 {
        return config_err("episodes and timeout must be positive");
    }
    let mut state = env.start_state();
    let mut total = 0.0;
    let mut steps = 0;
    let mut reached = false;
    while steps < timeout {
        let step = env.step(state, policy.act(env, &state)?);
        total += step.reward;
        steps += 1;
        state = step.next;
        if step.done {
            reached = true;
            break;
        }
    }
    Ok(EvalOutcome {
        avg_reward: total / steps as f64,
        episodes,
        mean_steps: steps as f64,
        success_rate: if reached { 1.0 } else { 0.0 },
    })
}

struct ArmEpisode {
    state: ArmState,
    rng: ChaCha8Rng,
    total: f64,
    steps: usize,
    done: bool,
    success: bool,
}

/// Noiseless rollouts from uniformly drawn arm states, each episode ending at
/// a completed grasp or after `timeout` steps. Episodes run side by side with
/// one rng stream each, so the result matches running them one at a time.
pub fn evaluate_arm<P: ArmPolicy + ?Sized, R: Rng + ?Sized>(
    policy: &P,
    env: &ArmEnv,
    episodes: usize,
    timeout: usize,
    rng: &mut R,
) -> Result<EvalOutcome> {
    if episodes == 0 || timeout == 0 {
        return config_err("episodes and timeout must be positive");
    }
    let base: u64 = rng.random();
    let mut eps: Vec<ArmEpisode> = (0..episodes)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(base);
            rng.set_stream(i as u64);
            ArmEpisode { state: env.sample_state(&mut rng), rng, total: 0.0, steps: 0, done: false, success: false }
        })
        .collect();
    for _ in 0..timeout {
        let active: Vec<usize> = (0..eps.len()).filter(|&i| !eps[i].done).collect();
        if active.is_empty() {
            break;
        }
        let states: Vec<ArmState> = active.iter().map(|&i| eps[i].state.clone()).collect();
        let actions = policy.act(&env.observe_batch(&states))?;
        if actions.dim() != (active.len(), env.sections()) {
            return shape_err("policy returned the wrong action shape");
        }
        for (row, &i) in active.iter().enumerate() {
            let ep = &mut eps[i];
            let action: Vec<f64> = actions.row(row).to_vec();
            let step = env.step(&ep.state, &action, &mut ep.rng);
            ep.total += step.reward;
            ep.steps += 1;
            ep.state = step.next;
            if step.signal == ArmSignal::Success {
                ep.done = true;
                ep.success = true;
            }
        }
    }
    let n = episodes as f64;
    Ok(EvalOutcome {
        avg_reward: eps.iter().map(|e| e.total / e.steps as f64).sum::<f64>() / n,
        episodes,
        mean_steps: eps.iter().map(|e| e.steps as f64).sum::<f64>() / n,
        success_rate: eps.iter().filter(|e| e.success).count() as f64 / n,
    })
}
