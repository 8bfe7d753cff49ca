//! Fixed-capacity ring of transitions with uniform sampling.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::{PolicyError, ACT_DIM, OBS_DIM};

pub const DEFAULT_CAPACITY: usize = 40_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub obs: [f64; OBS_DIM],
    pub action: [f64; ACT_DIM],
    pub reward: f64,
    pub next_obs: [f64; OBS_DIM],
    pub done: bool,
}

/// Column-major view of a sampled minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub action: Array2<f64>,
    pub reward: Array1<f64>,
    pub next_obs: Array2<f64>,
    /// 1.0 for terminal transitions.
    pub done: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }

    pub fn from_transitions(items: &[Transition]) -> Self {
        let n = items.len();
        let mut batch = Batch {
            obs: Array2::zeros((n, OBS_DIM)),
            action: Array2::zeros((n, ACT_DIM)),
            reward: Array1::zeros(n),
            next_obs: Array2::zeros((n, OBS_DIM)),
            done: Array1::zeros(n),
        };
        for (row, t) in items.iter().enumerate() {
            for j in 0..OBS_DIM {
                batch.obs[[row, j]] = t.obs[j];
                batch.next_obs[[row, j]] = t.next_obs[j];
            }
            for j in 0..ACT_DIM {
                batch.action[[row, j]] = t.action[j];
            }
            batch.reward[row] = t.reward;
            batch.done[row] = if t.done { 1.0 } else { 0.0 };
        }
        batch
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
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

    /// Appends, overwriting the oldest entry once full. Returns the stored count.
    pub fn push(&mut self, t: Transition) -> usize {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
        self.items.len()
    }

    /// Oldest-first iteration.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items[self.head..].iter().chain(&self.items[..self.head])
    }

    /// Uniform sampling with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Result<Batch, PolicyError> {
        if self.items.is_empty() {
            return Err(PolicyError::EmptyBuffer);
        }
        let picked: Vec<Transition> = (0..size)
            .map(|_| self.items[rng.gen_range(0..self.items.len())])
            .collect();
        Ok(Batch::from_transitions(&picked))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tagged(i: usize) -> Transition {
        Transition {
            obs: [i as f64; OBS_DIM],
            action: [0.0; ACT_DIM],
            reward: i as f64,
            next_obs: [0.0; OBS_DIM],
            done: i.is_multiple_of(2),
        }
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut buf = ReplayBuffer::new(DEFAULT_CAPACITY);
        for i in 0..=DEFAULT_CAPACITY {
            buf.push(tagged(i));
        }
        assert_eq!(buf.len(), DEFAULT_CAPACITY);
        assert_eq!(buf.iter().next().unwrap().reward, 1.0);
        assert!(buf.iter().all(|t| t.reward != 0.0));
        assert_eq!(buf.iter().last().unwrap().reward, DEFAULT_CAPACITY as f64);
    }

    #[test]
    fn sampling_shape_and_determinism() {
        let mut buf = ReplayBuffer::new(100);
        for i in 0..37 {
            buf.push(tagged(i));
        }
        let a = buf.sample(512, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = buf.sample(512, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.len(), 512);
        assert_eq!(a.obs.dim(), (512, OBS_DIM));
        assert_eq!(a, b);
        for row in 0..a.len() {
            assert_eq!(a.obs[[row, 0]], a.reward[row]);
            assert_eq!(a.done[row], if (a.reward[row] as usize).is_multiple_of(2) { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn empty_sample_is_error() {
        let buf = ReplayBuffer::new(4);
        assert!(matches!(
            buf.sample(1, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(PolicyError::EmptyBuffer)
        ));
    }
}
