//! Bounded FIFO experience replay with uniform without-replacement
//! mini-batch sampling.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One stored experience.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action_index: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter("replay capacity must be >= 1".into()));
        }
        Ok(Self { capacity, storage: VecDeque::with_capacity(capacity) })
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Pushes a transition, evicting the oldest when full.
    pub fn push(&mut self, t: Transition) {
        if self.storage.len() == self.capacity {
            self.storage.pop_front();
        }
        self.storage.push_back(t);
    }

    /// Samples `batch` distinct transitions uniformly. Requires
    /// `batch <= len`.
    pub fn sample<'a, R: Rng>(&'a self, batch: usize, rng: &mut R) -> Result<Vec<&'a Transition>> {
        if batch == 0 || batch > self.storage.len() {
            return Err(Error::EmptyBatch);
        }
        // Partial Fisher-Yates over an index vector.
        let mut idx: Vec<usize> = (0..self.storage.len()).collect();
        let mut out = Vec::with_capacity(batch);
        for k in 0..batch {
            let pick = rng.gen_range(k..idx.len());
            idx.swap(k, pick);
            out.push(&self.storage[idx[k]]);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(reward: f64) -> Transition {
        Transition {
            state: vec![0.0; 3],
            action_index: 0,
            reward,
            next_state: vec![0.0; 3],
            terminal: false,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut buf = ReplayBuffer::new(3).unwrap();
        for i in 0..5 {
            buf.push(t(i as f64));
        }
        assert_eq!(buf.len(), 3);
        let rewards: Vec<f64> = buf.storage.iter().map(|x| x.reward).collect();
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn never_exceeds_capacity() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        for i in 0..1000 {
            buf.push(t(i as f64));
            assert!(buf.len() <= 10);
        }
    }

    #[test]
    fn sampling_is_without_replacement() {
        let mut buf = ReplayBuffer::new(100).unwrap();
        for i in 0..100 {
            buf.push(t(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = buf.sample(100, &mut rng).unwrap();
        let mut rewards: Vec<i64> = batch.iter().map(|x| x.reward as i64).collect();
        rewards.sort_unstable();
        rewards.dedup();
        assert_eq!(rewards.len(), 100);
    }

    #[test]
    fn sample_larger_than_buffer_fails() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        buf.push(t(0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(buf.sample(2, &mut rng).is_err());
        assert!(buf.sample(0, &mut rng).is_err());
    }
}
