#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use udrl::ndnet::{Activation, NetworkParams};

pub const FD_STEP: f64 = 1e-5;

/// `|a - b| / max(|a|, |b|)`, with both sides below `1e-7` counted as equal.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-7 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| rel_err(*x, *y)).fold(0.0, f64::max)
}

/// Central differences of `f` with respect to every parameter of `net`.
pub fn fd_params(net: &NetworkParams, mut f: impl FnMut(&NetworkParams) -> f64) -> Vec<f64> {
    let base = net.to_flat();
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + FD_STEP;
        probe.set_flat(&p).unwrap();
        let hi = f(&probe);
        p[i] = base[i] - FD_STEP;
        probe.set_flat(&p).unwrap();
        let lo = f(&probe);
        out.push((hi - lo) / (2.0 * FD_STEP));
    }
    out
}

pub fn random_matrix<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

/// A random MLP with 1-2 hidden layers and per-layer random activations.
pub fn random_net<R: Rng>(input: usize, output: usize, output_act: Option<Activation>, rng: &mut R) -> NetworkParams {
    let depth = rng.random_range(1..=2);
    let mut dims = vec![input];
    dims.extend((0..depth).map(|_| rng.random_range(2..=6)));
    dims.push(output);
    let acts = [Activation::Relu, Activation::Tanh, Activation::Identity];
    let shapes: Vec<(usize, usize)> = dims.windows(2).map(|w| (w[0], w[1])).collect();
    let mut activations: Vec<Activation> = shapes.iter().map(|_| acts[rng.random_range(0..3)]).collect();
    if let Some(a) = output_act {
        *activations.last_mut().unwrap() = a;
    }
    let mut net = NetworkParams::init(&shapes, &activations, rng.random()).unwrap();
    // Non-zero biases exercise the bias gradients.
    for l in net.layers_mut() {
        l.biases.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    net
}

/// A small, fast configuration for `algo`.
pub fn tiny_config(algo: udrl::harness::Algorithm) -> udrl::harness::ExperimentConfig {
    use udrl::harness::{EnvKind, ExperimentConfig};
    let mut cfg = match algo.env() {
        EnvKind::Maze => ExperimentConfig::maze(9, 9, algo),
        EnvKind::Arm => ExperimentConfig::arm(2, algo),
    };
    let d = &mut cfg.discrete;
    d.hidden = vec![8];
    d.batch_size = 16;
    d.minibatch_size = 16;
    d.minibatch_maximum = 5;
    d.observation_size = 20;
    d.replay_memory = 64;
    let c = &mut cfg.continuous;
    c.hidden = vec![8];
    c.batch_size = 16;
    c.minibatch_size = 16;
    c.minibatch_maximum = 5;
    c.replay_memory = 64;
    cfg.updates = 60;
    cfg.eval_interval = 20;
    cfg.eval_episodes = 3;
    cfg.eval_timeout = 20;
    cfg
}

/// Breadth-first distances to `target` over non-obstacle cells.
pub fn bfs_distances(env: &udrl::envspace::MazeEnv, target: (usize, usize)) -> Vec<Option<usize>> {
    let (rows, cols) = (env.rows(), env.cols());
    let mut dist = vec![None; rows * cols];
    let mut queue = std::collections::VecDeque::from([target]);
    dist[target.0 * cols + target.1] = Some(0);
    while let Some((r, c)) = queue.pop_front() {
        let d = dist[r * cols + c].unwrap();
        let cand = [(r.wrapping_sub(1), c), (r + 1, c), (r, c.wrapping_sub(1)), (r, c + 1)];
        for (nr, nc) in cand {
            if nr < rows && nc < cols && !env.cell(nr, nc).is_obstacle() && dist[nr * cols + nc].is_none() {
                dist[nr * cols + nc] = Some(d + 1);
                queue.push_back((nr, nc));
            }
        }
    }
    dist
}

/// Best evaluation score from the start: either walk straight to the goal
/// or detour through the bonus. Returns `(avg_reward, steps)`.
pub fn maze_optimum(env: &udrl::envspace::MazeEnv) -> (f64, usize) {
    let cols = env.cols();
    let at = |d: &[Option<usize>], (r, c): (usize, usize)| d[r * cols + c].unwrap();
    let to_goal = bfs_distances(env, env.goal());
    let direct = at(&to_goal, env.start());
    let mut best = (env.goal_reward / direct as f64, direct);
    if let Some(b) = env.bonus() {
        let via = at(&bfs_distances(env, b), env.start()) + at(&to_goal, b);
        let score = (env.goal_reward + env.bonus_reward) / via as f64;
        if score > best.0 {
            best = (score, via);
        }
    }
    best
}

/// Optimal action values by value iteration over `(cell, flag)` states.
/// Indexed `[flag][row * cols + col][action]`; obstacle and goal cells stay 0.
pub fn maze_q_star(env: &udrl::envspace::MazeEnv, gamma: f64) -> [Vec<[f64; 4]>; 2] {
    use udrl::envspace::{MazeAction, MazeState};
    let cols = env.cols();
    let mut q = [vec![[0.0; 4]; env.rows() * cols], vec![[0.0; 4]; env.rows() * cols]];
    loop {
        let mut delta: f64 = 0.0;
        for &(r, c) in env.sampleable_cells() {
            for flag in [false, true] {
                for a in 0..4 {
                    let step = env.step(MazeState::new(r, c, flag), MazeAction::from_index(a).unwrap());
                    let n = step.next;
                    let v = if step.done {
                        0.0
                    } else {
                        q[usize::from(n.bonus_collected)][n.row * cols + n.col].iter().cloned().fold(f64::MIN, f64::max)
                    };
                    let new = step.reward + gamma * v;
                    let old = &mut q[usize::from(flag)][r * cols + c][a];
                    delta = delta.max((new - *old).abs());
                    *old = new;
                }
            }
        }
        if delta < 1e-12 {
            return q;
        }
    }
}

/// The value surface `max_a Q*(cell, flag = 0)`, with terminal and obstacle
/// cells at 0.
pub fn q_star_grid(env: &udrl::envspace::MazeEnv, gamma: f64) -> udrl::harness::ValueGrid {
    let q = maze_q_star(env, gamma);
    let (rows, cols) = (env.rows(), env.cols());
    let mut cells = Vec::new();
    let mut values = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            cells.push(env.cell(r, c));
            let sampled = env.sampleable_cells().contains(&(r, c));
            values.push(if sampled { q[0][r * cols + c].iter().cloned().fold(f64::MIN, f64::max) } else { 0.0 });
        }
    }
    udrl::harness::ValueGrid { rows, cols, cells, values }
}
