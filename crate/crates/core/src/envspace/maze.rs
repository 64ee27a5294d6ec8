//! Serpentine grid maze.
//!
//! Odd rows are walls with a single opening. Openings alternate between
//! column 1 and column `cols - 2`, starting with column 1 in the wall just
//! above the bottom row, so a 9x9 maze opens at (1,7), (3,1), (5,7), (7,1).
//! The agent starts bottom-left and the goal is the top-right cell.

use ndarray::Array2;
use rand::Rng;

use super::{ActionSpace, EnvSpec, Sampleable};
use crate::error::{config_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cell {
    Free,
    Obstacle,
    Start,
    Goal,
    Bonus,
}

impl Cell {
    pub fn symbol(self) -> char {
        match self {
            Cell::Free => '.',
            Cell::Obstacle => '#',
            Cell::Start => 'S',
            Cell::Goal => 'G',
            Cell::Bonus => 'B',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Cell::Free => "free",
            Cell::Obstacle => "obstacle",
            Cell::Start => "start",
            Cell::Goal => "goal",
            Cell::Bonus => "bonus",
        }
    }

    pub fn is_obstacle(self) -> bool {
        self == Cell::Obstacle
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MazeAction {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl MazeAction {
    pub const ALL: [MazeAction; 4] = [MazeAction::Up, MazeAction::Down, MazeAction::Left, MazeAction::Right];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    fn delta(self) -> (isize, isize) {
        match self {
            MazeAction::Up => (-1, 0),
            MazeAction::Down => (1, 0),
            MazeAction::Left => (0, -1),
            MazeAction::Right => (0, 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MazeState {
    pub row: usize,
    pub col: usize,
    pub bonus_collected: bool,
}

impl MazeState {
    pub fn new(row: usize, col: usize, bonus_collected: bool) -> Self {
        Self { row, col, bonus_collected }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MazeStep {
    pub next: MazeState,
    pub reward: f64,
    pub done: bool,
}

#[derive(Clone, Debug)]
pub struct MazeEnv {
    rows: usize,
    cols: usize,
    grid: Vec<Cell>,
    start: (usize, usize),
    goal: (usize, usize),
    bonus: Option<(usize, usize)>,
    sampleable: Vec<(usize, usize)>,
    pub obstacle_penalty: f64,
    pub goal_reward: f64,
    pub bonus_reward: f64,
}

pub const MIN_SIDE: usize = 9;
pub const MAX_SIDE: usize = 31;

impl MazeEnv {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows != cols {
            return config_err(format!("maze must be square, got {rows}x{cols}"));
        }
        if rows.is_multiple_of(2) || !(MIN_SIDE..=MAX_SIDE).contains(&rows) {
            return config_err(format!("maze side must be odd and within {MIN_SIDE}..={MAX_SIDE}, got {rows}"));
        }
        let mut grid = vec![Cell::Free; rows * cols];
        for r in (1..rows).step_by(2) {
            let opening = Self::opening_column(rows, cols, r);
            for c in 0..cols {
                if c != opening {
                    grid[r * cols + c] = Cell::Obstacle;
                }
            }
        }
        let start = (rows - 1, 0);
        let goal = (0, cols - 1);
        // Bonus sits on the top wall's opening when that opening is on the
        // left half, otherwise on the free cell just left of the goal.
        let top_opening = Self::opening_column(rows, cols, 1);
        let bonus = if 2 * top_opening < cols { (1, top_opening) } else { (0, cols - 2) };
        grid[start.0 * cols + start.1] = Cell::Start;
        grid[goal.0 * cols + goal.1] = Cell::Goal;
        grid[bonus.0 * cols + bonus.1] = Cell::Bonus;
        let sampleable = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .filter(|&(r, c)| !matches!(grid[r * cols + c], Cell::Obstacle | Cell::Goal))
            .collect();
        Ok(Self {
            rows,
            cols,
            grid,
            start,
            goal,
            bonus: Some(bonus),
            sampleable,
            obstacle_penalty: -1.0,
            goal_reward: 100.0,
            bonus_reward: 50.0,
        })
    }

    fn opening_column(rows: usize, cols: usize, wall_row: usize) -> usize {
        let from_bottom = (rows - 2 - wall_row) / 2;
        if from_bottom.is_multiple_of(2) {
            1
        } else {
            cols - 2
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.grid[row * self.cols + col]
    }

    pub fn start(&self) -> (usize, usize) {
        self.start
    }

    pub fn goal(&self) -> (usize, usize) {
        self.goal
    }

    pub fn bonus(&self) -> Option<(usize, usize)> {
        self.bonus
    }

    pub fn start_state(&self) -> MazeState {
        MazeState::new(self.start.0, self.start.1, false)
    }

    /// Free cells of the wall rows.
    pub fn openings(&self) -> Vec<(usize, usize)> {
        (1..self.rows)
            .step_by(2)
            .map(|r| (r, Self::opening_column(self.rows, self.cols, r)))
            .collect()
    }

    /// Cells the uniform sampler draws from: everything but walls and goal.
    pub fn sampleable_cells(&self) -> &[(usize, usize)] {
        &self.sampleable
    }

    pub fn neighbors(&self, row: usize, col: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        MazeAction::ALL.into_iter().filter_map(move |a| self.offset(row, col, a))
    }

    fn offset(&self, row: usize, col: usize, action: MazeAction) -> Option<(usize, usize)> {
        let (dr, dc) = action.delta();
        let r = row.checked_add_signed(dr)?;
        let c = col.checked_add_signed(dc)?;
        (r < self.rows && c < self.cols).then_some((r, c))
    }

    pub fn spec(&self) -> EnvSpec {
        EnvSpec {
            state_dim: 3,
            action_space: ActionSpace::Discrete(4),
            sampleable: Sampleable::MazeCells { cells: self.sampleable.len() },
        }
    }

    /// Walls and grid edges cost `obstacle_penalty` and leave the agent in
    /// place; the bonus pays once per episode.
    pub fn step(&self, state: MazeState, action: MazeAction) -> MazeStep {
        let target = self
            .offset(state.row, state.col, action)
            .filter(|&(r, c)| !self.cell(r, c).is_obstacle());
        let Some((row, col)) = target else {
            return MazeStep { next: state, reward: self.obstacle_penalty, done: false };
        };
        let mut next = MazeState { row, col, ..state };
        match self.cell(row, col) {
            Cell::Goal => MazeStep { next, reward: self.goal_reward, done: true },
            Cell::Bonus if !state.bonus_collected => {
                next.bonus_collected = true;
                MazeStep { next, reward: self.bonus_reward, done: false }
            }
            _ => MazeStep { next, reward: 0.0, done: false },
        }
    }

    pub fn step_batch(&self, states: &[MazeState], actions: &[usize]) -> Vec<MazeStep> {
        states
            .iter()
            .zip(actions)
            .map(|(&s, &a)| self.step(s, MazeAction::from_index(a).expect("action index below 4")))
            .collect()
    }

    pub fn sample_states<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<MazeState> {
        (0..n)
            .map(|_| {
                let (row, col) = self.sampleable[rng.random_range(0..self.sampleable.len())];
                MazeState::new(row, col, rng.random_bool(0.5))
            })
            .collect()
    }

    /// `(row/(rows-1), col/(cols-1), flag)`.
    pub fn encode(&self, state: &MazeState) -> [f64; 3] {
        [
            state.row as f64 / (self.rows - 1) as f64,
            state.col as f64 / (self.cols - 1) as f64,
            if state.bonus_collected { 1.0 } else { 0.0 },
        ]
    }

    pub fn encode_batch(&self, states: &[MazeState]) -> Array2<f64> {
        let mut out = Array2::zeros((states.len(), 3));
        for (mut row, s) in out.rows_mut().into_iter().zip(states) {
            let e = self.encode(s);
            row.iter_mut().zip(e).for_each(|(d, v)| *d = v);
        }
        out
    }

    /// One character per cell using `.#SGB`, rows separated by newlines.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.rows * (self.cols + 1));
        for r in 0..self.rows {
            s.extend((0..self.cols).map(|c| self.cell(r, c).symbol()));
            s.push('\n');
        }
        s
    }
}
