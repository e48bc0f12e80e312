//! Mergeable replica statistics and goodness-of-fit helpers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Count, mean and centred second moment with an associative merge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Self) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.push(x);
        }
        s
    }
}

/// Integer-valued histogram.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    counts: BTreeMap<i64, u64>,
    total: u64,
}

impl Histogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, k: i64) {
        *self.counts.entry(k).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        for (&k, &c) in &other.counts {
            *self.counts.entry(k).or_insert(0) += c;
        }
        self.total += other.total;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &BTreeMap<i64, u64> {
        &self.counts
    }

    pub fn frequency(&self, k: i64) -> f64 {
        self.counts.get(&k).copied().unwrap_or(0) as f64 / self.total as f64
    }

    /// Empirical `P(X >= k)`.
    pub fn tail(&self, k: i64) -> f64 {
        self.counts.range(k..).map(|(_, c)| *c).sum::<u64>() as f64 / self.total as f64
    }

    pub fn range(&self) -> Option<(i64, i64)> {
        Some((*self.counts.keys().next()?, *self.counts.keys().next_back()?))
    }

    /// Total variation distance to `pmf`, which must be summable over
    /// `support`; oracle mass outside the support is added as error.
    pub fn tv_distance(&self, pmf: impl Fn(i64) -> f64, support: std::ops::RangeInclusive<i64>) -> f64 {
        let mut dist = 0.0;
        let mut covered = 0.0;
        for k in support.clone() {
            let p = pmf(k);
            covered += p;
            dist += (self.frequency(k) - p).abs();
        }
        let outside: u64 = self
            .counts
            .iter()
            .filter(|(k, _)| !support.contains(k))
            .map(|(_, c)| *c)
            .sum();
        dist += outside as f64 / self.total as f64;
        dist += (1.0 - covered).max(0.0);
        0.5 * dist
    }

    /// Total variation distance between two histograms.
    pub fn tv_between(&self, other: &Self) -> f64 {
        let keys: std::collections::BTreeSet<i64> = self.counts.keys().chain(other.counts.keys()).copied().collect();
        0.5 * keys
            .into_iter()
            .map(|k| (self.frequency(k) - other.frequency(k)).abs())
            .sum::<f64>()
    }

    pub fn stats(&self) -> RunningStats {
        let mut s = RunningStats::new();
        for (&k, &c) in &self.counts {
            for _ in 0..c {
                s.push(k as f64);
            }
        }
        s
    }
}

/// Result of a chi-square goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of observed counts against `pmf`.
///
/// Cells are formed in increasing order and pooled until each has expected
/// count at least 5; the two tails beyond the observed range are folded into
/// the outermost cells.
pub fn chi_square_gof(observed: &BTreeMap<i64, u64>, pmf: impl Fn(i64) -> f64, n: u64) -> ChiSquare {
    let (lo, hi) = match (observed.keys().next(), observed.keys().next_back()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => {
            return ChiSquare {
                statistic: 0.0,
                dof: 0,
                p_value: 1.0,
            }
        }
    };
    let nf = n as f64;
    // widen so that the expected mass beyond the range is negligible
    let mut lo_ext = lo;
    while pmf(lo_ext - 1) * nf > 1e-9 {
        lo_ext -= 1;
    }
    let mut hi_ext = hi;
    while pmf(hi_ext + 1) * nf > 1e-9 {
        hi_ext += 1;
    }
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut e, mut o) = (0.0, 0.0);
    for k in lo_ext..=hi_ext {
        e += pmf(k) * nf;
        o += observed.get(&k).copied().unwrap_or(0) as f64;
        if e >= 5.0 {
            cells.push((o, e));
            e = 0.0;
            o = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64).map(|d| d.sf(statistic)).unwrap_or(f64::NAN)
    };
    ChiSquare { statistic, dof, p_value }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn running_stats_basics() {
        let s: RunningStats = [1.0, 2.0, 3.0, 4.0].into_iter().collect();
        assert_eq!(s.count(), 4);
        assert!((s.mean() - 2.5).abs() < 1e-15);
        assert!((s.variance() - 5.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn histogram_tv_and_tail() {
        let mut h = Histogram::new();
        for k in [0, 0, 1, 1] {
            h.push(k);
        }
        assert!((h.tail(1) - 0.5).abs() < 1e-15);
        let tv = h.tv_distance(|k| if k == 0 { 1.0 } else { 0.0 }, 0..=1);
        assert!((tv - 0.5).abs() < 1e-15);
        let mut g = Histogram::new();
        g.push(0);
        assert!((h.tv_between(&g) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn chi_square_rejects_wrong_law() {
        let mut obs = BTreeMap::new();
        obs.insert(0, 600u64);
        obs.insert(1, 400u64);
        let fair = chi_square_gof(&obs, |k| if k == 0 || k == 1 { 0.5 } else { 0.0 }, 1000);
        assert!(fair.p_value < 1e-8);
        let right = chi_square_gof(&obs, |k| [0.6, 0.4].get(k as usize).copied().unwrap_or(0.0), 1000);
        assert!(right.p_value > 0.99);
    }

    proptest! {
        #[test]
        fn merge_is_consistent(xs in prop::collection::vec(-100.0f64..100.0, 2..200), split in 0usize..200) {
            let split = split % xs.len();
            let all: RunningStats = xs.iter().copied().collect();
            let mut a: RunningStats = xs[..split].iter().copied().collect();
            let b: RunningStats = xs[split..].iter().copied().collect();
            a.merge(&b);
            prop_assert_eq!(a.count(), all.count());
            prop_assert!((a.mean() - all.mean()).abs() < 1e-9);
            prop_assert!((a.variance() - all.variance()).abs() < 1e-7 * all.variance().max(1.0));
        }
    }
}
