//! Fixed-capacity FIFO experience replay with uniform sampling.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{validation, Result};
use crate::gamesolve::JointAction;

pub const DEFAULT_CAPACITY: usize = 10_000;
pub const DEFAULT_MIN_FILL: usize = 200;

/// One environment step as stored for replay.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub next_state: Vec<f64>,
    pub action: JointAction,
    pub rewards: Vec<f64>,
    pub terminal: bool,
}

impl Transition {
    pub fn validate(&self) -> Result<()> {
        if self.state.len() != self.next_state.len() {
            return Err(validation(format!(
                "state dimension {} differs from next-state dimension {}",
                self.state.len(),
                self.next_state.len()
            )));
        }
        if self.rewards.len() != self.action.len() {
            return Err(validation(format!(
                "{} rewards for {} agents",
                self.rewards.len(),
                self.action.len()
            )));
        }
        let finite = self
            .state
            .iter()
            .chain(&self.next_state)
            .chain(&self.rewards)
            .all(|v| v.is_finite());
        if !finite {
            return Err(validation("transition contains non-finite entries"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    /// Minimum size before sampling is allowed; `None` disables the threshold.
    min_fill: Option<usize>,
    storage: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, min_fill: Option<usize>) -> Result<Self> {
        if capacity == 0 {
            return Err(validation("replay capacity must be positive"));
        }
        Ok(ReplayBuffer {
            capacity,
            min_fill,
            storage: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.storage.iter()
    }

    /// Appends `t`, evicting the oldest entry when full.
    pub fn push(&mut self, t: Transition) -> Result<()> {
        t.validate()?;
        if self.storage.len() == self.capacity {
            self.storage.pop_front();
        }
        self.storage.push_back(t);
        Ok(())
    }

    /// Whether a batch of `batch_size` may be drawn.
    pub fn ready(&self, batch_size: usize) -> bool {
        if batch_size == 0 || self.storage.is_empty() {
            return false;
        }
        match self.min_fill {
            Some(min) => self.storage.len() >= min.max(batch_size),
            None => true,
        }
    }

    /// `batch_size` transitions drawn uniformly with replacement, or `None`
    /// while the buffer is not ready.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Option<Vec<&Transition>> {
        if !self.ready(batch_size) {
            return None;
        }
        let n = self.storage.len();
        Some(
            (0..batch_size)
                .map(|_| &self.storage[rng.gen_range(0..n)])
                .collect(),
        )
    }
}
