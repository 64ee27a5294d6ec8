use std::fmt::Write as _;

use crate::discrete::QAgent;
use crate::envspace::{Cell, MazeEnv, MazeState};
use crate::error::{config_err, shape_err, Result};

use super::checkpoint::{Checkpoint, TrainedAgent};

/// `V(cell) = max_a Q(cell, flag = 0, a)` for every cell of a maze.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueGrid {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<Cell>,
    pub values: Vec<f64>,
}

pub fn export_value_grid(agent: &QAgent, env: &MazeEnv) -> Result<ValueGrid> {
    let states: Vec<MazeState> = (0..env.rows())
        .flat_map(|r| (0..env.cols()).map(move |c| MazeState::new(r, c, false)))
        .collect();
    let q = agent.q_values(&env.encode_batch(&states))?;
    if q.ncols() == 0 {
        return shape_err("network has no outputs");
    }
    Ok(ValueGrid {
        rows: env.rows(),
        cols: env.cols(),
        cells: states.iter().map(|s| env.cell(s.row, s.col)).collect(),
        values: q.rows().into_iter().map(|r| r.fold(f64::NEG_INFINITY, |m, &v| m.max(v))).collect(),
    })
}

/// Value grid of a saved maze agent; other checkpoints are a config error.
pub fn value_grid_from_checkpoint(checkpoint: &Checkpoint) -> Result<ValueGrid> {
    match &checkpoint.agent {
        TrainedAgent::Discrete(agent) => export_value_grid(agent, &MazeEnv::new(checkpoint.rows, checkpoint.cols)?),
        TrainedAgent::Continuous(_) => config_err("value grids need a maze checkpoint"),
    }
}

impl ValueGrid {
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.cols + col]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("row,col,cell_type,value\n");
        for r in 0..self.rows {
            for c in 0..self.cols {
                writeln!(s, "{r},{c},{},{}", self.cell(r, c).name(), self.value(r, c)).unwrap();
            }
        }
        s
    }

    fn free_neighbors(&self, r: usize, c: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let up = r.checked_sub(1).map(|r| (r, c));
        let down = (r + 1 < self.rows).then_some((r + 1, c));
        let left = c.checked_sub(1).map(|c| (r, c));
        let right = (c + 1 < self.cols).then_some((r, c + 1));
        [up, down, left, right].into_iter().flatten().filter(|&(r, c)| !self.cell(r, c).is_obstacle())
    }

    /// Highest-valued non-obstacle cell.
    pub fn global_peak(&self) -> (usize, usize) {
        let mut best = None;
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.cell(r, c).is_obstacle() {
                    continue;
                }
                let v = self.value(r, c);
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some(((r, c), v));
                }
            }
        }
        best.expect("maze has free cells").0
    }

    /// Free cells other than goal and bonus whose value is strictly above
    /// every such 4-neighbour.
    pub fn local_maxima(&self) -> Vec<(usize, usize)> {
        let plain = |r: usize, c: usize| matches!(self.cell(r, c), Cell::Free | Cell::Start);
        let mut out = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                if !plain(r, c) {
                    continue;
                }
                let v = self.value(r, c);
                let mut nb = self.free_neighbors(r, c).filter(|&(nr, nc)| plain(nr, nc)).peekable();
                if nb.peek().is_some() && nb.all(|(nr, nc)| v > self.value(nr, nc)) {
                    out.push((r, c));
                }
            }
        }
        out
    }

    /// Mean value of the bonus cell and its free non-goal neighbours, and the
    /// mean over free non-goal cells two steps away. `None` when the maze has
    /// no bonus.
    pub fn bonus_region_contrast(&self) -> Option<(f64, f64)> {
        let (br, bc) = (0..self.values.len())
            .find(|&i| self.cells[i] == Cell::Bonus)
            .map(|i| (i / self.cols, i % self.cols))?;
        let usable = |r: usize, c: usize| !self.cell(r, c).is_obstacle() && self.cell(r, c) != Cell::Goal;
        let mut region = vec![(br, bc)];
        region.extend(self.free_neighbors(br, bc).filter(|&(r, c)| usable(r, c)));
        let mut ring = Vec::new();
        for &(r, c) in &region[1..] {
            for n in self.free_neighbors(r, c) {
                if usable(n.0, n.1) && !region.contains(&n) && !ring.contains(&n) {
                    ring.push(n);
                }
            }
        }
        let mean = |cells: &[(usize, usize)]| cells.iter().map(|&(r, c)| self.value(r, c)).sum::<f64>() / cells.len() as f64;
        if ring.is_empty() {
            return None;
        }
        Some((mean(&region), mean(&ring)))
    }
}
