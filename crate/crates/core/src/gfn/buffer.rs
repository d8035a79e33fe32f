use std::collections::VecDeque;

use rand::Rng;

use super::rollout::Trajectory;

/// Bounded FIFO of trajectory records; the oldest record is evicted first.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    records: VecDeque<Trajectory>,
    /// Total insertions since creation.
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        ReplayBuffer {
            capacity,
            records: VecDeque::with_capacity(capacity.min(1 << 16)),
            pushed: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, t: Trajectory) {
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(t);
        self.pushed += 1;
    }

    pub fn extend(&mut self, ts: impl IntoIterator<Item = Trajectory>) {
        for t in ts {
            self.push(t);
        }
    }

    /// Records from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Trajectory> {
        self.records.iter()
    }

    /// `n` records drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Trajectory> {
        assert!(!self.records.is_empty(), "sampling from an empty replay buffer");
        (0..n)
            .map(|_| self.records[rng.random_range(0..self.records.len())].clone())
            .collect()
    }

    pub(crate) fn from_parts(capacity: usize, records: Vec<Trajectory>, pushed: u64) -> Self {
        ReplayBuffer {
            capacity,
            records: records.into(),
            pushed,
        }
    }
}
