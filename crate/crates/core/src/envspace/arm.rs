//! Planar K-section robot arm chasing a randomly drifting goal box.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ActionSpace, EnvSpec, Sampleable};
use crate::error::{config_err, Result};

pub const MAX_SECTIONS: usize = 9;

/// Tunables of the arm task. Defaults: unit sections, a goal box 10% of the
/// workspace radius wide, 0.1 rad per joint per step, goal drift of 0.5% of the
/// radius per step, and 5 held steps for a successful grasp.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmConfig {
    pub sections: usize,
    pub section_length: f64,
    pub goal_box_fraction: f64,
    pub max_angle_step: f64,
    pub goal_step_fraction: f64,
    pub hold_steps: usize,
}

impl ArmConfig {
    pub fn new(sections: usize) -> Self {
        Self {
            sections,
            section_length: 1.0,
            goal_box_fraction: 0.1,
            max_angle_step: 0.1,
            goal_step_fraction: 0.005,
            hold_steps: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmState {
    /// Relative joint angles; section `k` points along the sum of the first
    /// `k + 1` angles.
    pub joint_angles: Vec<f64>,
    pub hold_counter: usize,
    pub goal: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArmSignal {
    Continue,
    /// The finger slipped out of the box after catching it.
    Reset,
    Success,
}

impl ArmSignal {
    pub fn is_terminal(self) -> bool {
        self != ArmSignal::Continue
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmStep {
    pub next: ArmState,
    pub reward: f64,
    pub signal: ArmSignal,
}

#[derive(Clone, Debug)]
pub struct ArmEnv {
    sections: usize,
    section_length: f64,
    goal_box_side: f64,
    goal_center: [f64; 2],
    hold_steps: usize,
    goal_step_delta: f64,
    max_angle_step: f64,
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

impl ArmEnv {
    pub fn new(config: &ArmConfig, seed: u64) -> Result<Self> {
        if !(1..=MAX_SECTIONS).contains(&config.sections) {
            return config_err(format!("sections must be within 1..={MAX_SECTIONS}, got {}", config.sections));
        }
        if !(config.section_length > 0.0 && config.goal_box_fraction > 0.0 && config.max_angle_step > 0.0) {
            return config_err("section length, goal box and angle step must be positive");
        }
        if config.goal_step_fraction < 0.0 || config.hold_steps == 0 {
            return config_err("goal step must be non-negative and hold_steps at least 1");
        }
        let radius = config.sections as f64 * config.section_length;
        let mut env = Self {
            sections: config.sections,
            section_length: config.section_length,
            goal_box_side: config.goal_box_fraction * radius,
            goal_center: [0.0, 0.0],
            hold_steps: config.hold_steps,
            goal_step_delta: config.goal_step_fraction * radius,
            max_angle_step: config.max_angle_step,
        };
        env.goal_center = env.random_goal(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(env)
    }

    pub fn sections(&self) -> usize {
        self.sections
    }

    pub fn section_length(&self) -> f64 {
        self.section_length
    }

    pub fn radius(&self) -> f64 {
        self.sections as f64 * self.section_length
    }

    pub fn goal_box_side(&self) -> f64 {
        self.goal_box_side
    }

    pub fn goal_center(&self) -> [f64; 2] {
        self.goal_center
    }

    pub fn hold_steps(&self) -> usize {
        self.hold_steps
    }

    pub fn max_angle_step(&self) -> f64 {
        self.max_angle_step
    }

    pub fn observation_dim(&self) -> usize {
        4 * self.sections + 1
    }

    pub fn spec(&self) -> EnvSpec {
        EnvSpec {
            state_dim: self.observation_dim(),
            action_space: ActionSpace::Continuous {
                dim: self.sections,
                low: vec![-self.max_angle_step; self.sections],
                high: vec![self.max_angle_step; self.sections],
            },
            sampleable: Sampleable::ArmConfigurations { sections: self.sections, radius: self.radius() },
        }
    }

    /// Uniform over the workspace disc.
    pub fn random_goal<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let r = self.radius() * rng.random::<f64>().sqrt();
        let t = rng.random_range(-PI..PI);
        [r * t.cos(), r * t.sin()]
    }

    /// Joint positions from the base outwards; the last one is the finger.
    pub fn joints(&self, state: &ArmState) -> Vec<[f64; 2]> {
        let mut heading = 0.0;
        let mut p = [0.0, 0.0];
        state
            .joint_angles
            .iter()
            .map(|a| {
                heading += a;
                p = [p[0] + self.section_length * heading.cos(), p[1] + self.section_length * heading.sin()];
                p
            })
            .collect()
    }

    pub fn finger(&self, state: &ArmState) -> [f64; 2] {
        *self.joints(state).last().expect("at least one section")
    }

    pub fn inside_goal(&self, finger: [f64; 2], goal: [f64; 2]) -> bool {
        let half = 0.5 * self.goal_box_side;
        (finger[0] - goal[0]).abs() <= half && (finger[1] - goal[1]).abs() <= half
    }

    /// Minus the finger-to-goal distance as a fraction of the workspace
    /// radius, plus 1 inside the goal box.
    pub fn reward(&self, state: &ArmState) -> f64 {
        let f = self.finger(state);
        let d = ((f[0] - state.goal[0]).powi(2) + (f[1] - state.goal[1]).powi(2)).sqrt();
        let bonus = if self.inside_goal(f, state.goal) { 1.0 } else { 0.0 };
        bonus - d / self.radius()
    }

    /// `[joints / R (2K), (goal - joint) / 2R (2K), inside flag]`, every entry
    /// within `[-1, 1]`.
    pub fn observe(&self, state: &ArmState) -> Vec<f64> {
        let joints = self.joints(state);
        let r = self.radius();
        let mut obs = Vec::with_capacity(self.observation_dim());
        for j in &joints {
            obs.extend([j[0] / r, j[1] / r]);
        }
        for j in &joints {
            obs.extend([(state.goal[0] - j[0]) / (2.0 * r), (state.goal[1] - j[1]) / (2.0 * r)]);
        }
        let finger = joints[joints.len() - 1];
        obs.push(if self.inside_goal(finger, state.goal) { 1.0 } else { 0.0 });
        obs
    }

    pub fn observe_batch(&self, states: &[ArmState]) -> Array2<f64> {
        let d = self.observation_dim();
        let mut out = Array2::zeros((states.len(), d));
        for (mut row, s) in out.rows_mut().into_iter().zip(states) {
            row.iter_mut().zip(self.observe(s)).for_each(|(dst, v)| *dst = v);
        }
        out
    }

    pub fn clip_action(&self, action: &mut [f64]) {
        action.iter_mut().for_each(|a| *a = a.clamp(-self.max_angle_step, self.max_angle_step));
    }

    /// Rotates the joints, lets the goal drift, and scores the result.
    pub fn step<R: Rng + ?Sized>(&self, state: &ArmState, action: &[f64], rng: &mut R) -> ArmStep {
        assert_eq!(action.len(), self.sections, "one angle increment per section");
        let joint_angles = state
            .joint_angles
            .iter()
            .zip(action)
            .map(|(a, d)| wrap_angle(a + d.clamp(-self.max_angle_step, self.max_angle_step)))
            .collect();
        let dx = rng.random_range(-1.0..=1.0) * self.goal_step_delta;
        let dy = rng.random_range(-1.0..=1.0) * self.goal_step_delta;
        let mut goal = [state.goal[0] + dx, state.goal[1] + dy];
        let norm = (goal[0] * goal[0] + goal[1] * goal[1]).sqrt();
        if norm > self.radius() {
            let s = self.radius() / norm;
            goal = [goal[0] * s, goal[1] * s];
        }
        let mut next = ArmState { joint_angles, hold_counter: state.hold_counter, goal };
        let reward = self.reward(&next);
        let signal = if self.inside_goal(self.finger(&next), next.goal) {
            next.hold_counter += 1;
            if next.hold_counter >= self.hold_steps {
                ArmSignal::Success
            } else {
                ArmSignal::Continue
            }
        } else if next.hold_counter > 0 {
            next.hold_counter = 0;
            ArmSignal::Reset
        } else {
            ArmSignal::Continue
        };
        ArmStep { next, reward, signal }
    }

    pub fn step_batch<R: Rng + ?Sized>(&self, states: &[ArmState], actions: &Array2<f64>, rng: &mut R) -> Vec<ArmStep> {
        states
            .iter()
            .zip(actions.rows())
            .map(|(s, a)| self.step(s, a.as_slice().expect("standard layout"), rng))
            .collect()
    }

    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> ArmState {
        let joint_angles = (0..self.sections).map(|_| rng.random_range(-PI..PI)).collect();
        ArmState { joint_angles, hold_counter: 0, goal: self.random_goal(rng) }
    }

    pub fn sample_states<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<ArmState> {
        (0..n).map(|_| self.sample_state(rng)).collect()
    }
}
