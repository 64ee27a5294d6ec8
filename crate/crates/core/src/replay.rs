//! Transition storage: the ring-buffer replay memory of the DQN/DDPG
//! baselines and the batch FIFO of the enhanced (E-) agents.

use std::collections::VecDeque;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use crate::error::{shape_err, Error, Result};

/// Row-aligned `(s, a, r, s', terminal)` samples. Discrete actions occupy a
/// single column holding the action index.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionBatch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub terminal: Vec<bool>,
}

impl TransitionBatch {
    pub fn new(
        states: Array2<f64>,
        actions: Array2<f64>,
        rewards: Array1<f64>,
        next_states: Array2<f64>,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        let n = states.nrows();
        if actions.nrows() != n || rewards.len() != n || next_states.nrows() != n || terminal.len() != n {
            return shape_err("transition batch columns differ in length");
        }
        if next_states.ncols() != states.ncols() {
            return shape_err("states and next states differ in width");
        }
        Ok(Self { states, actions, rewards, next_states, terminal })
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn action_dim(&self) -> usize {
        self.actions.ncols()
    }

    /// Rows `indices` in order, repeats allowed.
    pub fn select(&self, indices: &[usize]) -> TransitionBatch {
        let mut out = BatchBuilder::new(indices.len(), self.state_dim(), self.action_dim());
        for &i in indices {
            out.push_row(self, i);
        }
        out.finish()
    }
}

/// Accumulates rows into a fresh batch.
pub(crate) struct BatchBuilder {
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    terminal: Vec<bool>,
    state_dim: usize,
    action_dim: usize,
}

impl BatchBuilder {
    pub(crate) fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Self {
        Self {
            states: Vec::with_capacity(capacity * state_dim),
            actions: Vec::with_capacity(capacity * action_dim),
            rewards: Vec::with_capacity(capacity),
            next_states: Vec::with_capacity(capacity * state_dim),
            terminal: Vec::with_capacity(capacity),
            state_dim,
            action_dim,
        }
    }

    pub(crate) fn push(&mut self, s: ArrayView1<f64>, a: ArrayView1<f64>, r: f64, s2: ArrayView1<f64>, done: bool) {
        self.states.extend(s.iter());
        self.actions.extend(a.iter());
        self.rewards.push(r);
        self.next_states.extend(s2.iter());
        self.terminal.push(done);
    }

    fn push_row(&mut self, b: &TransitionBatch, i: usize) {
        self.push(b.states.row(i), b.actions.row(i), b.rewards[i], b.next_states.row(i), b.terminal[i]);
    }

    pub(crate) fn finish(self) -> TransitionBatch {
        let n = self.rewards.len();
        TransitionBatch {
            states: Array2::from_shape_vec((n, self.state_dim), self.states).expect("row width"),
            actions: Array2::from_shape_vec((n, self.action_dim), self.actions).expect("row width"),
            rewards: Array1::from_vec(self.rewards),
            next_states: Array2::from_shape_vec((n, self.state_dim), self.next_states).expect("row width"),
            terminal: self.terminal,
        }
    }
}

/// Fixed-capacity replay memory; a push into a full buffer overwrites the
/// oldest transition.
#[derive(Clone, Debug)]
pub struct RingBuffer {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    states: Array2<f64>,
    actions: Array2<f64>,
    rewards: Vec<f64>,
    next_states: Array2<f64>,
    terminal: Vec<bool>,
    cursor: usize,
    len: usize,
}

impl RingBuffer {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Self {
        assert!(capacity > 0, "ring buffer capacity must be positive");
        Self {
            capacity,
            state_dim,
            action_dim,
            states: Array2::zeros((capacity, state_dim)),
            actions: Array2::zeros((capacity, action_dim)),
            rewards: vec![0.0; capacity],
            next_states: Array2::zeros((capacity, state_dim)),
            terminal: vec![false; capacity],
            cursor: 0,
            len: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, state: &[f64], action: &[f64], reward: f64, next_state: &[f64], terminal: bool) -> Result<()> {
        if state.len() != self.state_dim || next_state.len() != self.state_dim || action.len() != self.action_dim {
            return shape_err(format!(
                "transition ({}, {}, {}) does not match buffer schema ({}, {})",
                state.len(),
                action.len(),
                next_state.len(),
                self.state_dim,
                self.action_dim
            ));
        }
        let i = self.cursor;
        self.states.row_mut(i).iter_mut().zip(state).for_each(|(d, v)| *d = *v);
        self.actions.row_mut(i).iter_mut().zip(action).for_each(|(d, v)| *d = *v);
        self.rewards[i] = reward;
        self.next_states.row_mut(i).iter_mut().zip(next_state).for_each(|(d, v)| *d = *v);
        self.terminal[i] = terminal;
        self.cursor = (self.cursor + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
        Ok(())
    }

    /// Slot index of the `k`-th oldest stored transition.
    fn slot(&self, k: usize) -> usize {
        (self.cursor + self.capacity - self.len + k) % self.capacity
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample_minibatch<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<TransitionBatch> {
        if self.len < n || n == 0 {
            return Err(Error::NotReady { have: self.len, need: n.max(1) });
        }
        let mut out = BatchBuilder::new(n, self.state_dim, self.action_dim);
        for _ in 0..n {
            let i = self.slot(rng.random_range(0..self.len));
            out.push(
                self.states.row(i),
                self.actions.row(i),
                self.rewards[i],
                self.next_states.row(i),
                self.terminal[i],
            );
        }
        Ok(out.finish())
    }

    /// Stored rewards, oldest first.
    pub fn rewards_oldest_first(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.rewards[self.slot(k)]).collect()
    }
}

/// Queue of whole batches of `batch_size` samples each.
#[derive(Clone, Debug)]
pub struct BatchFifo {
    capacity_batches: usize,
    batch_size: usize,
    batches: VecDeque<TransitionBatch>,
}

impl BatchFifo {
    pub fn new(capacity_batches: usize, batch_size: usize) -> Self {
        assert!(capacity_batches > 0 && batch_size > 0, "fifo sizes must be positive");
        Self { capacity_batches, batch_size, batches: VecDeque::with_capacity(capacity_batches + 1) }
    }

    /// Capacity in batches for a memory of `memory_size` samples.
    pub fn for_memory(memory_size: usize, batch_size: usize) -> Self {
        Self::new((memory_size / batch_size).max(1), batch_size)
    }

    pub fn capacity_batches(&self) -> usize {
        self.capacity_batches
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn num_batches(&self) -> usize {
        self.batches.len()
    }

    pub fn total_samples(&self) -> usize {
        self.batches.len() * self.batch_size
    }

    pub fn is_full(&self) -> bool {
        self.batches.len() >= self.capacity_batches
    }

    pub fn push(&mut self, batch: TransitionBatch) -> Result<()> {
        if batch.len() != self.batch_size {
            return shape_err(format!("batch of {} samples, fifo expects {}", batch.len(), self.batch_size));
        }
        if let Some(first) = self.batches.front() {
            if first.state_dim() != batch.state_dim() || first.action_dim() != batch.action_dim() {
                return shape_err("batch schema differs from stored batches");
            }
        }
        self.batches.push_back(batch);
        Ok(())
    }

    pub fn pop_oldest(&mut self) -> Result<TransitionBatch> {
        self.batches
            .pop_front()
            .ok_or_else(|| Error::State("pop from an empty batch fifo".into()))
    }

    /// `n` samples uniformly with replacement over all pooled samples.
    pub fn sample_minibatch<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<TransitionBatch> {
        let total = self.total_samples();
        if total < n || n == 0 {
            return Err(Error::NotReady { have: total, need: n.max(1) });
        }
        let first = &self.batches[0];
        let mut out = BatchBuilder::new(n, first.state_dim(), first.action_dim());
        for _ in 0..n {
            let k = rng.random_range(0..total);
            out.push_row(&self.batches[k / self.batch_size], k % self.batch_size);
        }
        Ok(out.finish())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tagged_batch(tags: std::ops::Range<usize>) -> TransitionBatch {
        let n = tags.len();
        let rewards: Vec<f64> = tags.map(|t| t as f64).collect();
        TransitionBatch::new(
            Array2::zeros((n, 2)),
            Array2::zeros((n, 1)),
            Array1::from_vec(rewards),
            Array2::zeros((n, 2)),
            vec![false; n],
        )
        .unwrap()
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut ring = RingBuffer::new(3, 1, 1);
        for t in 1..=4 {
            ring.push(&[0.0], &[0.0], t as f64, &[0.0], false).unwrap();
        }
        assert_eq!(ring.rewards_oldest_first(), vec![2.0, 3.0, 4.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let b = ring.sample_minibatch(3, &mut rng).unwrap();
            assert!(b.rewards.iter().all(|&r| r >= 2.0));
        }
    }

    #[test]
    fn ring_rejects_schema_mismatch_and_underfill() {
        let mut ring = RingBuffer::new(4, 2, 1);
        assert!(matches!(ring.push(&[0.0], &[0.0], 0.0, &[0.0], false), Err(Error::Shape(_))));
        ring.push(&[0.0, 1.0], &[2.0], 1.0, &[0.0, 0.0], true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(ring.sample_minibatch(2, &mut rng), Err(Error::NotReady { have: 1, need: 2 })));
    }

    #[test]
    fn ring_sampling_is_deterministic() {
        let mut ring = RingBuffer::new(50, 1, 1);
        for t in 0..80 {
            ring.push(&[t as f64], &[0.0], t as f64, &[0.0], false).unwrap();
        }
        let a = ring.sample_minibatch(20, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = ring.sample_minibatch(20, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fifo_order_and_counts() {
        let mut fifo = BatchFifo::new(3, 4);
        for k in 0..3 {
            fifo.push(tagged_batch(4 * k..4 * k + 4)).unwrap();
        }
        assert_eq!(fifo.total_samples(), 12);
        assert!(fifo.is_full());
        let oldest = fifo.pop_oldest().unwrap();
        assert_eq!(oldest, tagged_batch(0..4));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let b = fifo.sample_minibatch(1, &mut rng).unwrap();
            assert!(b.rewards[0] >= 4.0);
        }
    }

    #[test]
    fn fifo_errors() {
        let mut fifo = BatchFifo::new(2, 4);
        assert!(matches!(fifo.pop_oldest(), Err(Error::State(_))));
        assert!(matches!(fifo.push(tagged_batch(0..3)), Err(Error::Shape(_))));
        assert!(matches!(
            fifo.sample_minibatch(1, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::NotReady { .. })
        ));
        assert_eq!(BatchFifo::for_memory(10_000, 200).capacity_batches(), 50);
    }

    #[test]
    fn select_repeats_rows() {
        let b = tagged_batch(0..5);
        let s = b.select(&[4, 4, 0]);
        assert_eq!(s.rewards.to_vec(), vec![4.0, 4.0, 0.0]);
    }
}
