//! Complete binary sum tree over nonnegative channel rates.
//!
//! Internal nodes are recomputed from their children on every update, so
//! the root is always the exact floating sum of the current leaves in a
//! fixed association order and never accumulates drift.

use rand::Rng;

use crate::rng::uniform;

#[derive(Debug, Clone)]
pub struct SumTree {
    len: usize,
    base: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(len: usize) -> Self {
        let base = len.max(1).next_power_of_two();
        Self {
            len,
            base,
            nodes: vec![0.0; 2 * base],
        }
    }

    pub fn from_rates(rates: &[f64]) -> Self {
        let mut t = Self::new(rates.len());
        t.nodes[t.base..t.base + rates.len()].copy_from_slice(rates);
        for k in (1..t.base).rev() {
            t.nodes[k] = t.nodes[2 * k] + t.nodes[2 * k + 1];
        }
        t
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.base + i]
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    /// Sets leaf `i`; `rate` must be finite and nonnegative.
    #[inline]
    pub fn set(&mut self, i: usize, rate: f64) {
        debug_assert!(i < self.len && rate >= 0.0 && rate.is_finite());
        let mut k = self.base + i;
        self.nodes[k] = rate;
        k >>= 1;
        while k >= 1 {
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
            k >>= 1;
        }
    }

    /// Leaf `i` with `prefix(i) <= target < prefix(i + 1)`, skipping
    /// zero-rate leaves.
    #[inline]
    pub fn find(&self, mut target: f64) -> usize {
        let mut k = 1;
        while k < self.base {
            let left = self.nodes[2 * k];
            if target < left {
                k = 2 * k;
            } else {
                target -= left;
                k = 2 * k + 1;
            }
        }
        let mut i = k - self.base;
        // Rounding can land on a trailing zero-rate leaf; step back to a live one.
        while i > 0 && (i >= self.len || self.nodes[self.base + i] == 0.0) {
            i -= 1;
        }
        i
    }

    /// Draws a leaf with probability proportional to its rate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.find(uniform(rng) * self.total())
    }

    /// Sum of all leaves recomputed in plain sequential order.
    pub fn resum(&self) -> f64 {
        self.nodes[self.base..self.base + self.len].iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn selection_frequencies() {
        let rates = [0.5, 0.0, 2.0, 1.5, 0.0];
        let t = SumTree::from_rates(&rates);
        let mut rng = stream(1, 0, 0);
        let mut counts = [0u64; 5];
        let n = 400_000;
        for _ in 0..n {
            counts[t.sample(&mut rng)] += 1;
        }
        assert_eq!(counts[1], 0);
        assert_eq!(counts[4], 0);
        for (i, r) in rates.iter().enumerate() {
            let p = r / 4.0;
            let emp = counts[i] as f64 / n as f64;
            assert!((emp - p).abs() < 5.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-12);
        }
    }

    #[test]
    fn never_selects_zero_rate_leaf_at_boundaries() {
        let t = SumTree::from_rates(&[1.0, 0.0, 0.0]);
        assert_eq!(t.find(0.0), 0);
        assert_eq!(t.find(0.999_999_999), 0);
        assert_eq!(t.find(1.0), 0);
    }

    proptest! {
        #[test]
        fn total_tracks_updates(
            init in prop::collection::vec(0.0f64..10.0, 1..70),
            updates in prop::collection::vec((0usize..70, 0.0f64..10.0), 0..300),
        ) {
            let mut t = SumTree::from_rates(&init);
            let mut shadow = init.clone();
            for (i, r) in updates {
                let i = i % init.len();
                t.set(i, r);
                shadow[i] = r;
            }
            let exact: f64 = shadow.iter().sum();
            prop_assert!((t.total() - exact).abs() <= 1e-9 * exact.max(1.0));
            prop_assert!((t.resum() - exact).abs() <= 1e-9 * exact.max(1.0));
            for (i, r) in shadow.iter().enumerate() {
                prop_assert_eq!(t.get(i), *r);
            }
        }

        #[test]
        fn find_respects_prefix_sums(rates in prop::collection::vec(0.0f64..5.0, 1..40), u in 0.0f64..1.0) {
            let t = SumTree::from_rates(&rates);
            prop_assume!(t.total() > 0.0);
            let target = u * t.total();
            let i = t.find(target);
            prop_assert!(rates[i] > 0.0);
            let prefix: f64 = rates[..i].iter().sum();
            prop_assert!(prefix <= target + 1e-9);
            prop_assert!(target < prefix + rates[i] + 1e-9);
        }
    }
}
