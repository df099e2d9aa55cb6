use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;

use crate::nn::NetworkSpec;

/// One `(s, a, r, s', done)` experience. States are stacked, scaled
/// observations shared between consecutive transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Arc<[f64]>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Arc<[f64]>,
    pub done: bool,
}

/// Fixed-capacity FIFO buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity: capacity.max(1),
            items: VecDeque::with_capacity(capacity.clamp(1, 1 << 16)),
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

    /// Appends, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// `batch` transitions drawn uniformly with replacement, or `None` while
    /// fewer than `batch` are stored.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Option<Vec<&Transition>> {
        if batch == 0 || self.items.len() < batch {
            return None;
        }
        Some(
            (0..batch)
                .map(|_| &self.items[rng.random_range(0..self.items.len())])
                .collect(),
        )
    }
}

/// The last [`NetworkSpec::FRAMES`] observations, oldest first. A new
/// episode repeats its first observation to fill the stack.
#[derive(Debug, Clone)]
pub struct FrameStack {
    frames: VecDeque<Vec<f64>>,
}

impl FrameStack {
    pub fn new(initial: Vec<f64>) -> Self {
        let frames = std::iter::repeat_n(initial, NetworkSpec::FRAMES).collect();
        FrameStack { frames }
    }

    pub fn push(&mut self, obs: Vec<f64>) {
        self.frames.pop_front();
        self.frames.push_back(obs);
    }

    pub fn stacked(&self) -> Arc<[f64]> {
        self.frames.iter().flatten().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn transition(tag: f64) -> Transition {
        let s: Arc<[f64]> = Arc::from(vec![tag]);
        Transition {
            state: s.clone(),
            action: 0,
            reward: tag,
            next_state: s,
            done: false,
        }
    }

    #[test]
    fn fifo_eviction_and_capacity() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(transition(i as f64));
            assert!(b.len() <= 3);
        }
        let rewards: Vec<f64> = (0..3).map(|i| b.get(i).unwrap().reward).collect();
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn sampling_needs_a_full_batch_and_is_seeded() {
        let mut b = ReplayBuffer::new(100);
        for i in 0..10 {
            b.push(transition(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(b.sample(11, &mut rng).is_none());
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            b.sample(8, &mut rng).unwrap().iter().map(|t| t.reward).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn frame_stack_pads_with_the_first_observation() {
        let mut f = FrameStack::new(vec![1.0, 2.0]);
        assert_eq!(&*f.stacked(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        f.push(vec![3.0, 4.0]);
        assert_eq!(&*f.stacked(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 3.0, 4.0]);
    }
}
