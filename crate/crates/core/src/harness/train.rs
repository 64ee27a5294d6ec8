use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::continuous::{ddpg_step, euddpg_cycle, uddpg_iteration, ActorCritic, DdpgMemory};
use crate::discrete::{dqn_step, eudqn_cycle, udqn_iteration, DqnMemory, QAgent};
use crate::envspace::{ArmConfig, ArmEnv, MazeEnv};
use crate::error::Result;
use crate::replay::BatchFifo;
use crate::rollout::Diagnostics;

use super::checkpoint::{Checkpoint, TrainedAgent};
use super::config::{Algorithm, EnvKind, ExperimentConfig};
use super::eval::{evaluate_arm, evaluate_maze};

pub const METRICS_HEADER: &str = "update_index,avg_reward,eval_episodes,fresh_samples,wall_ms_per_update,mean_target_q,loss";

/// One row of metrics.csv. `mean_target_q` and `loss` average the updates
/// since the previous record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalRecord {
    pub update_index: u64,
    pub avg_reward: f64,
    pub eval_episodes: usize,
    pub fresh_samples: u64,
    pub wall_ms_per_update: f64,
    pub mean_target_q: f64,
    pub loss: f64,
}

impl EvalRecord {
    pub fn to_csv_row(&self, with_timing: bool) -> String {
        let wall = if with_timing { self.wall_ms_per_update.to_string() } else { String::new() };
        format!(
            "{},{},{},{},{},{},{}",
            self.update_index, self.avg_reward, self.eval_episodes, self.fresh_samples, wall, self.mean_target_q, self.loss
        )
    }
}

/// Mean bootstrapped target `Q(s', mu(s') | target)` of one U-agent training
/// call, tracked to watch the improvement condition of the batch update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonitorPoint {
    pub iteration: u64,
    pub update_index: u64,
    pub mean_target_q: f64,
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub records: Vec<EvalRecord>,
    pub monitor: Vec<MonitorPoint>,
    pub checkpoint: Checkpoint,
    /// Time spent inside agent calls, evaluation excluded.
    pub train_ms: f64,
}

impl TrainingOutcome {
    /// `(non-decreasing, decreasing)` counts of successive monitor deltas.
    pub fn monitor_signs(&self) -> (usize, usize) {
        let up = self.monitor.windows(2).filter(|w| w[1].mean_target_q >= w[0].mean_target_q).count();
        (up, self.monitor.len().saturating_sub(1) - up)
    }

    pub fn metrics_csv(&self, with_timing: bool) -> String {
        let mut s = format!("{METRICS_HEADER}\n");
        for r in &self.records {
            s += &r.to_csv_row(with_timing);
            s.push('\n');
        }
        s
    }
}

struct Recorder<'a> {
    cfg: &'a ExperimentConfig,
    records: Vec<EvalRecord>,
    monitor: Vec<MonitorPoint>,
    metrics_out: Option<BufWriter<File>>,
    monitor_out: Option<BufWriter<File>>,
    next_eval: u64,
    iteration: u64,
    window_ms: f64,
    window_updates: u64,
    losses: Vec<f64>,
    target_qs: Vec<f64>,
    train_ms: f64,
}

impl<'a> Recorder<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        let (mut metrics_out, mut monitor_out) = (None, None);
        if let Some(dir) = &cfg.out_dir {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("config.txt"), cfg.to_text())?;
            let mut m = BufWriter::new(File::create(dir.join("metrics.csv"))?);
            writeln!(m, "{METRICS_HEADER}")?;
            metrics_out = Some(m);
            if cfg.algo.is_unbiased() {
                let mut m = BufWriter::new(File::create(dir.join("monitor.csv"))?);
                writeln!(m, "iteration,update_index,mean_target_q,delta")?;
                monitor_out = Some(m);
            }
        }
        Ok(Self {
            cfg,
            records: Vec::new(),
            monitor: Vec::new(),
            metrics_out,
            monitor_out,
            next_eval: cfg.eval_interval,
            iteration: 0,
            window_ms: 0.0,
            window_updates: 0,
            losses: Vec::new(),
            target_qs: Vec::new(),
            train_ms: 0.0,
        })
    }

    fn absorb(&mut self, d: &Diagnostics, ms: f64, update_index: u64) -> Result<()> {
        self.window_ms += ms;
        self.train_ms += ms;
        if d.updates == 0 {
            return Ok(());
        }
        self.window_updates += d.updates as u64;
        self.losses.push(d.loss);
        self.target_qs.push(d.mean_target_q);
        if self.cfg.algo.is_unbiased() {
            self.iteration += 1;
            let delta = self.monitor.last().map_or(f64::NAN, |p| d.mean_target_q - p.mean_target_q);
            self.monitor.push(MonitorPoint { iteration: self.iteration, update_index, mean_target_q: d.mean_target_q });
            if let Some(m) = &mut self.monitor_out {
                writeln!(m, "{},{},{},{}", self.iteration, update_index, d.mean_target_q, delta)?;
            }
        }
        Ok(())
    }

    fn due(&self, update_index: u64) -> bool {
        update_index >= self.next_eval
    }

    fn record(&mut self, update_index: u64, fresh_samples: u64, avg_reward: f64) -> Result<()> {
        let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
        let rec = EvalRecord {
            update_index,
            avg_reward,
            eval_episodes: if self.cfg.evaluate { self.cfg.eval_episodes } else { 0 },
            fresh_samples,
            wall_ms_per_update: if self.window_updates == 0 { f64::NAN } else { self.window_ms / self.window_updates as f64 },
            mean_target_q: mean(&self.target_qs),
            loss: mean(&self.losses),
        };
        if let Some(m) = &mut self.metrics_out {
            writeln!(m, "{}", rec.to_csv_row(self.cfg.record_timing))?;
            m.flush()?;
        }
        self.records.push(rec);
        self.window_ms = 0.0;
        self.window_updates = 0;
        self.losses.clear();
        self.target_qs.clear();
        while self.next_eval <= update_index {
            self.next_eval += self.cfg.eval_interval;
        }
        Ok(())
    }

    fn finish(mut self, checkpoint: Checkpoint) -> Result<TrainingOutcome> {
        if let Some(m) = &mut self.monitor_out {
            m.flush()?;
        }
        if let Some(dir) = &self.cfg.out_dir {
            fs::write(dir.join("checkpoint.txt"), checkpoint.to_text())?;
        }
        Ok(TrainingOutcome { records: self.records, monitor: self.monitor, checkpoint, train_ms: self.train_ms })
    }
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs the configured agent for its update budget, evaluating every
/// `eval_interval` updates (plus once before training). With an output
/// directory set, writes config.txt, metrics.csv (incrementally),
/// monitor.csv for U-agents, and a final checkpoint.txt.
pub fn run_training(cfg: &ExperimentConfig) -> Result<TrainingOutcome> {
    cfg.validate()?;
    match cfg.env {
        EnvKind::Maze => train_maze(cfg),
        EnvKind::Arm => train_arm(cfg),
    }
}

fn train_maze(cfg: &ExperimentConfig) -> Result<TrainingOutcome> {
    let env = MazeEnv::new(cfg.rows, cfg.cols)?;
    let ac = &cfg.discrete;
    let mut agent = QAgent::new(env.spec().state_dim, ac, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut fifo = BatchFifo::for_memory(ac.replay_memory, ac.batch_size);
    let mut memory = DqnMemory::new(ac);
    let mut rec = Recorder::new(cfg)?;
    let evaluate = |agent: &QAgent| -> Result<f64> {
        if !cfg.evaluate {
            return Ok(f64::NAN);
        }
        Ok(evaluate_maze(agent, &env, cfg.eval_episodes, cfg.eval_timeout)?.avg_reward)
    };
    rec.record(0, 0, evaluate(&agent)?)?;
    while agent.update_counter < cfg.updates {
        let t = Instant::now();
        let d = match cfg.algo {
            Algorithm::Udqn => udqn_iteration(&mut agent, &env, ac, &mut rng)?,
            Algorithm::Eudqn => eudqn_cycle(&mut agent, &env, &mut fifo, ac, &mut rng)?,
            _ => dqn_step(&mut agent, &env, &mut memory, ac, &mut rng)?,
        };
        rec.absorb(&d, elapsed_ms(t), agent.update_counter)?;
        if rec.due(agent.update_counter) {
            let r = evaluate(&agent)?;
            rec.record(agent.update_counter, agent.fresh_sample_counter, r)?;
        }
    }
    let checkpoint = Checkpoint { algo: cfg.algo, rows: cfg.rows, cols: cfg.cols, sections: 0, agent: TrainedAgent::Discrete(agent) };
    rec.finish(checkpoint)
}

fn train_arm(cfg: &ExperimentConfig) -> Result<TrainingOutcome> {
    let env = ArmEnv::new(&ArmConfig::new(cfg.sections), cfg.seed)?;
    let cc = &cfg.continuous;
    let mut agent = ActorCritic::new(env.observation_dim(), env.sections(), env.max_angle_step(), cc, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    eval_rng.set_stream(1);
    let mut fifo = BatchFifo::for_memory(cc.replay_memory, cc.batch_size);
    let mut memory = DdpgMemory::new(&env, cc);
    let mut rec = Recorder::new(cfg)?;
    let mut evaluate = |agent: &ActorCritic| -> Result<f64> {
        if !cfg.evaluate {
            return Ok(f64::NAN);
        }
        Ok(evaluate_arm(agent, &env, cfg.eval_episodes, cfg.eval_timeout, &mut eval_rng)?.avg_reward)
    };
    rec.record(0, 0, evaluate(&agent)?)?;
    while agent.update_counter < cfg.updates {
        let t = Instant::now();
        let d = match cfg.algo {
            Algorithm::Uddpg => uddpg_iteration(&mut agent, &env, cc, &mut rng)?,
            Algorithm::Euddpg => euddpg_cycle(&mut agent, &env, &mut fifo, cc, &mut rng)?,
            _ => ddpg_step(&mut agent, &env, &mut memory, cc, &mut rng)?,
        };
        rec.absorb(&d, elapsed_ms(t), agent.update_counter)?;
        if rec.due(agent.update_counter) {
            let r = evaluate(&agent)?;
            rec.record(agent.update_counter, agent.fresh_sample_counter, r)?;
        }
    }
    let checkpoint = Checkpoint { algo: cfg.algo, rows: 0, cols: 0, sections: cfg.sections, agent: TrainedAgent::Continuous(agent) };
    rec.finish(checkpoint)
}

/// Runs the same config under seeds `seed, seed + 1, ...` and averages
/// `avg_reward` per record. All runs share one evaluation grid.
pub fn run_seeds(cfg: &ExperimentConfig, count: usize) -> Result<Vec<TrainingOutcome>> {
    (0..count as u64)
        .map(|i| {
            let mut c = cfg.clone();
            c.seed = cfg.seed + i;
            c.out_dir = cfg.out_dir.as_ref().map(|d| d.join(format!("seed_{}", c.seed)));
            run_training(&c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(algo: Algorithm) -> ExperimentConfig {
        let mut cfg = match algo.env() {
            EnvKind::Maze => ExperimentConfig::maze(9, 9, algo),
            EnvKind::Arm => ExperimentConfig::arm(2, algo),
        };
        cfg.discrete.hidden = vec![8];
        cfg.continuous.hidden = vec![8];
        cfg.discrete.batch_size = 16;
        cfg.discrete.minibatch_size = 16;
        cfg.discrete.minibatch_maximum = 5;
        cfg.discrete.observation_size = 20;
        cfg.discrete.replay_memory = 64;
        cfg.continuous.batch_size = 16;
        cfg.continuous.minibatch_size = 16;
        cfg.continuous.minibatch_maximum = 5;
        cfg.continuous.replay_memory = 64;
        cfg.updates = 100;
        cfg.eval_interval = 10;
        cfg.eval_episodes = 3;
        cfg.eval_timeout = 20;
        cfg
    }

    #[test]
    fn record_count_and_accounting() {
        let out = run_training(&tiny(Algorithm::Udqn)).unwrap();
        assert_eq!(out.records.len(), 11);
        assert_eq!(out.records.last().unwrap().fresh_samples, 1600);
        assert_eq!(out.monitor.len(), 100);
        let (up, down) = out.monitor_signs();
        assert_eq!(up + down, 99);

        let out = run_training(&tiny(Algorithm::Dqn)).unwrap();
        assert_eq!(out.records.last().unwrap().fresh_samples, 100 + 19);
        assert!(out.monitor.is_empty());

        let out = run_training(&tiny(Algorithm::Euddpg)).unwrap();
        // Memory holds 4 batches, so cycles 4.. train 5 updates each.
        assert_eq!(out.records.last().unwrap().fresh_samples, 16 * (3 + 20));
        assert!(out.records.windows(2).all(|w| w[0].update_index < w[1].update_index));
    }

    #[test]
    fn rejects_mismatched_algorithm() {
        let mut cfg = tiny(Algorithm::Udqn);
        cfg.algo = Algorithm::Ddpg;
        assert!(run_training(&cfg).is_err());
    }
}
