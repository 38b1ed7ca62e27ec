//! Fixed-capacity experience replay.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::safelayer::SafeContext;

/// One transition in network coordinates (normalized observation and
/// action).
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
    /// Plant condition the action was taken in, for re-deriving what a
    /// different proposal would have executed as.
    pub context: Option<SafeContext>,
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub action: Array2<f64>,
    pub reward: Array1<f64>,
    pub next_obs: Array2<f64>,
    /// 1 for a bootstrapped transition, 0 for a final one.
    pub not_done: Array1<f64>,
    pub contexts: Vec<Option<SafeContext>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }

    pub fn from_experiences(items: &[&Experience]) -> Self {
        let k = items.len();
        let d_o = items.first().map_or(0, |e| e.obs.len());
        let d_a = items.first().map_or(0, |e| e.action.len());
        Self {
            obs: Array2::from_shape_fn((k, d_o), |(i, j)| items[i].obs[j]),
            action: Array2::from_shape_fn((k, d_a), |(i, j)| items[i].action[j]),
            reward: items.iter().map(|e| e.reward).collect(),
            next_obs: Array2::from_shape_fn((k, d_o), |(i, j)| items[i].next_obs[j]),
            not_done: items.iter().map(|e| if e.done { 0.0 } else { 1.0 }).collect(),
            contexts: items.iter().map(|e| e.context.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Experience>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), cursor: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Overwrites the oldest entry once full.
    pub fn push(&mut self, e: Experience) {
        if self.items.len() < self.capacity {
            self.items.push(e);
        } else {
            self.items[self.cursor] = e;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Indices of a batch drawn uniformly without replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<usize> {
        assert!(k <= self.items.len(), "batch larger than buffer");
        rand::seq::index::sample(rng, self.items.len(), k).into_vec()
    }

    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Batch {
        let idx = self.sample_indices(k, rng);
        let items: Vec<&Experience> = idx.iter().map(|&i| &self.items[i]).collect();
        Batch::from_experiences(&items)
    }

    pub fn get(&self, i: usize) -> &Experience {
        &self.items[i]
    }
}
