//! Bookkeeping shared by the agent loops.

/// Position within a running episode of a baseline agent.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode<S> {
    pub state: Option<S>,
    pub steps: usize,
    pub completed: usize,
}

impl<S> Default for Episode<S> {
    fn default() -> Self {
        Self { state: None, steps: 0, completed: 0 }
    }
}

impl<S> Episode<S> {
    pub fn finish(&mut self) {
        self.state = None;
        self.steps = 0;
        self.completed += 1;
    }
}

/// What one agent call did. `loss` and `mean_target_q` average over the
/// parameter updates of the call and are NaN when none happened.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnostics {
    pub updates: usize,
    pub fresh_samples: usize,
    pub loss: f64,
    pub mean_target_q: f64,
}

impl Diagnostics {
    pub fn idle(fresh_samples: usize) -> Self {
        Self { updates: 0, fresh_samples, loss: f64::NAN, mean_target_q: f64::NAN }
    }

    pub(crate) fn averaged(fresh_samples: usize, losses: &[f64], target_qs: &[f64]) -> Self {
        if losses.is_empty() {
            return Self::idle(fresh_samples);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        Self { updates: losses.len(), fresh_samples, loss: mean(losses), mean_target_q: mean(target_qs) }
    }
}
