use rand::Rng as _;

use crate::envs::Action;
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminated: bool,
}

/// Fixed-capacity ring buffer of transitions with uniform sampling.
#[derive(Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be > 0");
        Self { capacity, storage: Vec::with_capacity(capacity.min(4096)), next: 0 }
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.storage[i]
    }

    /// Uniform indices with replacement.
    pub fn sample_indices(&self, rng: &mut Rng, n: usize) -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..self.storage.len())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn t(i: usize) -> Transition {
        Transition {
            obs: vec![i as f64],
            action: Action::Discrete(0),
            reward: i as f64,
            next_obs: vec![i as f64 + 1.0],
            terminated: false,
        }
    }

    #[test]
    fn ring_overwrites_oldest_first() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(t(i));
        }
        assert_eq!(buf.len(), 3);
        let rewards: Vec<f64> = (0..3).map(|i| buf.get(i).reward).collect();
        // slots 0 and 1 were overwritten by items 3 and 4
        assert_eq!(rewards, vec![3.0, 4.0, 2.0]);
    }

    #[test]
    fn sampling_covers_the_whole_buffer() {
        let mut buf = ReplayBuffer::new(10);
        for i in 0..10 {
            buf.push(t(i));
        }
        let mut rng = rng_from(3);
        let mut seen = [false; 10];
        for idx in buf.sample_indices(&mut rng, 1000) {
            seen[idx] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }
}
