//! Proportional prioritized replay over a fixed-capacity ring.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Added to every priority written by [`PrioritizedReplayBuffer::update_priorities`].
pub const PRIORITY_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    pub capacity: usize,
    pub alpha: f64,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            capacity: 50_000,
            alpha: 0.6,
            beta_start: 0.4,
            beta_end: 1.0,
        }
    }
}

impl ReplayConfig {
    /// Importance exponent annealed linearly over `[0, horizon]`.
    pub fn beta_at(&self, step: usize, horizon: usize) -> f64 {
        if horizon == 0 {
            return self.beta_end;
        }
        let frac = (step as f64 / horizon as f64).min(1.0);
        self.beta_start + frac * (self.beta_end - self.beta_start)
    }
}

/// Binary tree over leaf values with sum and max at every inner node.
#[derive(Clone, Debug)]
struct SegmentTree {
    leaves: usize,
    sum: Vec<f64>,
    max: Vec<f64>,
}

impl SegmentTree {
    fn new(capacity: usize) -> Self {
        let leaves = capacity.next_power_of_two();
        Self {
            leaves,
            sum: vec![0.0; 2 * leaves],
            max: vec![0.0; 2 * leaves],
        }
    }

    fn set(&mut self, index: usize, sum_value: f64, max_value: f64) {
        let mut node = index + self.leaves;
        self.sum[node] = sum_value;
        self.max[node] = max_value;
        while node > 1 {
            node /= 2;
            self.sum[node] = self.sum[2 * node] + self.sum[2 * node + 1];
            self.max[node] = self.max[2 * node].max(self.max[2 * node + 1]);
        }
    }

    fn total(&self) -> f64 {
        self.sum[1]
    }

    fn max(&self) -> f64 {
        self.max[1]
    }

    fn leaf(&self, index: usize) -> f64 {
        self.sum[index + self.leaves]
    }

    /// Leaf where the running sum first exceeds `mass`.
    fn find(&self, mut mass: f64) -> usize {
        let mut node = 1;
        while node < self.leaves {
            let left = self.sum[2 * node];
            if mass < left || self.sum[2 * node + 1] == 0.0 {
                node *= 2;
            } else {
                mass -= left;
                node = 2 * node + 1;
            }
        }
        node - self.leaves
    }
}

/// A sampled batch: borrowed items, normalized importance weights and the
/// slot indices needed to update priorities afterwards.
#[derive(Debug)]
pub struct Sample<'a, T> {
    pub items: Vec<&'a T>,
    pub weights: Vec<f32>,
    pub indices: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct PrioritizedReplayBuffer<T> {
    capacity: usize,
    alpha: f64,
    items: Vec<T>,
    next: usize,
    priorities: Vec<f64>,
    tree: SegmentTree,
}

impl<T> PrioritizedReplayBuffer<T> {
    pub fn new(capacity: usize, alpha: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(LabError::invalid("replay capacity must be positive"));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(LabError::invalid(format!("priority exponent must be non-negative, got {alpha}")));
        }
        Ok(Self {
            capacity,
            alpha,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            priorities: vec![0.0; capacity],
            tree: SegmentTree::new(capacity),
        })
    }

    pub fn from_config(config: &ReplayConfig) -> Result<Self> {
        Self::new(config.capacity, config.alpha)
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

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Changes the sampling exponent, rebuilding the sum structure.
    pub fn set_alpha(&mut self, alpha: f64) -> Result<()> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(LabError::invalid(format!("priority exponent must be non-negative, got {alpha}")));
        }
        self.alpha = alpha;
        for i in 0..self.items.len() {
            let p = self.priorities[i];
            self.tree.set(i, p.powf(alpha), p);
        }
        Ok(())
    }

    pub fn get(&self, index: usize) -> Option<&T> {
        self.items.get(index)
    }

    pub fn priority(&self, index: usize) -> Option<f64> {
        (index < self.items.len()).then(|| self.priorities[index])
    }

    /// Largest stored priority, 1 for an empty buffer.
    pub fn max_priority(&self) -> f64 {
        if self.items.is_empty() {
            1.0
        } else {
            self.tree.max()
        }
    }

    /// Slot that the next push will write.
    pub fn next_slot(&self) -> usize {
        self.next
    }

    /// Stores an item, overwriting the oldest slot once full. Without an
    /// explicit priority the current maximum is used.
    pub fn push(&mut self, item: T, priority: Option<f64>) -> Result<usize> {
        let p = match priority {
            Some(p) if p > 0.0 && p.is_finite() => p,
            Some(p) => return Err(LabError::invalid(format!("priority must be positive, got {p}"))),
            None => self.max_priority(),
        };
        let slot = self.next;
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[slot] = item;
        }
        self.priorities[slot] = p;
        self.tree.set(slot, p.powf(self.alpha), p);
        self.next = (self.next + 1) % self.capacity;
        Ok(slot)
    }

    /// Sampling probability of every stored slot.
    pub fn probabilities(&self) -> Vec<f64> {
        let total = self.tree.total();
        (0..self.items.len()).map(|i| self.tree.leaf(i) / total).collect()
    }

    /// Draws `batch` slots independently with probability `p_i^α / Σ p_j^α`.
    /// Importance weights `(N P(i))^-β` are divided by the batch maximum.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, beta: f64, rng: &mut R) -> Result<Sample<'_, T>> {
        let n = self.items.len();
        if batch == 0 || n < batch {
            return Err(LabError::UndersizedBuffer { size: n, requested: batch });
        }
        let total = self.tree.total();
        let mut indices = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for _ in 0..batch {
            let mass = rng.random::<f64>() * total;
            let idx = self.tree.find(mass).min(n - 1);
            let prob = self.tree.leaf(idx) / total;
            indices.push(idx);
            weights.push((n as f64 * prob).powf(-beta));
        }
        let max_w = weights.iter().cloned().fold(0.0f64, f64::max);
        Ok(Sample {
            items: indices.iter().map(|&i| &self.items[i]).collect(),
            weights: weights.into_iter().map(|w| (w / max_w) as f32).collect(),
            indices,
        })
    }

    /// Writes `priority + PRIORITY_FLOOR` to each slot.
    pub fn update_priorities(&mut self, indices: &[usize], priorities: &[f64]) -> Result<()> {
        if indices.len() != priorities.len() {
            return Err(LabError::invalid("indices and priorities differ in length"));
        }
        let n = self.items.len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(LabError::SlotOutOfRange { index: bad, size: n });
        }
        if let Some(p) = priorities.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(LabError::invalid(format!("priority must be finite and non-negative, got {p}")));
        }
        for (&i, &p) in indices.iter().zip(priorities) {
            let stored = p + PRIORITY_FLOOR;
            self.priorities[i] = stored;
            self.tree.set(i, stored.powf(self.alpha), stored);
        }
        Ok(())
    }

    /// Checks that every inner node equals the sum of its children.
    pub fn check_consistency(&self) -> bool {
        let t = &self.tree;
        (1..t.leaves).all(|node| {
            let s = t.sum[2 * node] + t.sum[2 * node + 1];
            (t.sum[node] - s).abs() <= 1e-12 * s.abs().max(1.0)
        }) && (0..self.items.len()).all(|i| self.priorities[i] > 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ring_semantics() {
        let mut buf = PrioritizedReplayBuffer::new(2, 0.6).unwrap();
        buf.push('a', None).unwrap();
        assert_eq!(buf.len(), 1);
        buf.push('b', None).unwrap();
        buf.push('c', None).unwrap();
        assert_eq!(buf.len(), 2);
        let stored: Vec<char> = (0..2).map(|i| *buf.get(i).unwrap()).collect();
        assert!(!stored.contains(&'a'));
        assert!(stored.contains(&'b') && stored.contains(&'c'));
    }

    #[test]
    fn fifo_eviction_under_saturation() {
        let mut buf = PrioritizedReplayBuffer::new(5, 0.6).unwrap();
        for i in 0..23 {
            buf.push(i, Some(1.0 + i as f64)).unwrap();
        }
        let mut stored: Vec<i32> = (0..5).map(|i| *buf.get(i).unwrap()).collect();
        stored.sort();
        assert_eq!(stored, vec![18, 19, 20, 21, 22]);
        assert_eq!(buf.next_slot(), 23 % 5);
    }

    #[test]
    fn default_priority_is_current_max() {
        let mut buf = PrioritizedReplayBuffer::new(4, 0.6).unwrap();
        buf.push(0, None).unwrap();
        assert_eq!(buf.priority(0), Some(1.0));
        buf.push(1, Some(7.5)).unwrap();
        let slot = buf.push(2, None).unwrap();
        assert_eq!(buf.priority(slot), Some(7.5));
        // once the maximum is evicted the next-largest takes over
        buf.push(3, Some(2.0)).unwrap();
        buf.update_priorities(&[1], &[0.5]).unwrap();
        let slot = buf.push(4, None).unwrap();
        assert_eq!(buf.priority(slot), Some(7.5));
    }

    #[test]
    fn rejects_bad_priorities_and_indices() {
        let mut buf = PrioritizedReplayBuffer::new(4, 0.6).unwrap();
        assert!(buf.push(0, Some(0.0)).is_err());
        assert!(buf.push(0, Some(-1.0)).is_err());
        assert!(buf.push(0, Some(f64::NAN)).is_err());
        buf.push(0, None).unwrap();
        assert!(matches!(buf.update_priorities(&[1], &[1.0]), Err(LabError::SlotOutOfRange { .. })));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(buf.sample(2, 0.4, &mut rng), Err(LabError::UndersizedBuffer { .. })));
    }

    #[test]
    fn proportional_probabilities() {
        let mut buf = PrioritizedReplayBuffer::new(4, 1.0).unwrap();
        buf.push(0, Some(3.0)).unwrap();
        buf.push(1, Some(1.0)).unwrap();
        let p = buf.probabilities();
        assert!((p[0] - 0.75).abs() < 1e-12 && (p[1] - 0.25).abs() < 1e-12);

        buf.set_alpha(0.0).unwrap();
        let p = buf.probabilities();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn uniform_priorities_give_unit_weights() {
        let mut buf = PrioritizedReplayBuffer::new(16, 0.6).unwrap();
        for i in 0..16 {
            buf.push(i, Some(2.0)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = buf.sample(8, 1.0, &mut rng).unwrap();
        assert!(s.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn zero_update_is_floored_and_sampleable() {
        let mut buf = PrioritizedReplayBuffer::new(4, 1.0).unwrap();
        buf.push(0, Some(1.0)).unwrap();
        buf.push(1, Some(1.0)).unwrap();
        buf.update_priorities(&[0], &[0.0]).unwrap();
        assert_eq!(buf.priority(0), Some(PRIORITY_FLOOR));
        assert!(buf.probabilities()[0] > 0.0);
        // with only the floored slot left it is the one drawn
        buf.update_priorities(&[1], &[0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(buf.sample(2, 0.4, &mut rng).unwrap().items.len(), 2);
    }

    #[test]
    fn identical_update_keeps_distribution() {
        let mut buf = PrioritizedReplayBuffer::new(8, 0.6).unwrap();
        for i in 0..8 {
            buf.push(i, Some(1.0 + i as f64)).unwrap();
        }
        buf.update_priorities(&[0, 1, 2], &[0.5, 0.5, 0.5]).unwrap();
        let before = buf.probabilities();
        let current: Vec<f64> = (0..3).map(|i| buf.priority(i).unwrap() - PRIORITY_FLOOR).collect();
        buf.update_priorities(&[0, 1, 2], &current).unwrap();
        let after = buf.probabilities();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn structure_stays_consistent(
            ops in prop::collection::vec((0.01f64..10.0, any::<bool>(), 0usize..64), 1..200),
            alpha in 0.0f64..1.5,
        ) {
            let mut buf = PrioritizedReplayBuffer::new(17, alpha).unwrap();
            for (p, update, idx) in ops {
                if update && !buf.is_empty() {
                    let i = idx % buf.len();
                    buf.update_priorities(&[i], &[p]).unwrap();
                } else {
                    buf.push((), Some(p)).unwrap();
                }
                prop_assert!(buf.len() <= buf.capacity());
                prop_assert!(buf.check_consistency());
                let total: f64 = buf.probabilities().iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn weights_bounded_by_one(
            ps in prop::collection::vec(0.01f64..10.0, 2..40),
            beta in 0.0f64..1.0,
            seed in any::<u64>(),
        ) {
            let mut buf = PrioritizedReplayBuffer::new(64, 0.6).unwrap();
            for &p in &ps {
                buf.push(0u8, Some(p)).unwrap();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = buf.sample(2, beta, &mut rng).unwrap();
            for &w in &s.weights {
                prop_assert!(w > 0.0 && w <= 1.0);
                if beta == 0.0 {
                    prop_assert_eq!(w, 1.0);
                }
            }
        }
    }
}
