use rand::Rng as _;

use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<O> {
    pub state: O,
    pub action: usize,
    pub reward: f64,
    pub next_state: O,
    pub done: bool,
}

/// Bounded FIFO with uniform sampling. Once full, each push overwrites
/// the oldest transition.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<O> {
    capacity: usize,
    items: Vec<Transition<O>>,
    next: usize,
}

impl<O> ReplayBuffer<O> {
    /// # Panics
    /// If `capacity` is zero.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition<O>) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &Transition<O> {
        &self.items[i]
    }

    /// `n` indices drawn uniformly with replacement.
    ///
    /// # Panics
    /// If the buffer is empty.
    pub fn sample_indices(&self, n: usize, rng: &mut Rng) -> Vec<usize> {
        assert!(!self.items.is_empty(), "sampling from an empty replay buffer");
        (0..n).map(|_| rng.random_range(0..self.items.len())).collect()
    }

    pub fn sample(&self, n: usize, rng: &mut Rng) -> Vec<&Transition<O>> {
        self.sample_indices(n, rng).into_iter().map(|i| &self.items[i]).collect()
    }
}
