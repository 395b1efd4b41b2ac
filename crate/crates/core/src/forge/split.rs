//! Train/val/test partitioning and weighted dataset mixing.

use alloc::vec::Vec;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;

use crate::seed;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SplitError {
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("need {needed} non-excluded items for val/test, have {available}")]
    NotEnoughEligible { needed: usize, available: usize },
    #[error("mixing weights must be finite, non-negative and not all zero")]
    BadWeights,
    #[error("{weights} weights for {sources} sources")]
    WeightCount { weights: usize, sources: usize },
    #[error("source {0} has positive weight but no items")]
    EmptySource(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self, SplitError> {
        let all = [train, val, test];
        let ok = all.iter().all(|r| r.is_finite() && *r >= 0.0)
            && libm::fabs(train + val + test - 1.0) < 1e-9;
        if ok {
            Ok(Self { train, val, test })
        } else {
            Err(SplitError::BadRatios(all))
        }
    }

    /// `(train, val, test)` sizes for `n` items. Val and test are rounded
    /// half away from zero; train takes the remainder.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let val = (libm::round(self.val * n as f64) as usize).min(n);
        let test = (libm::round(self.test * n as f64) as usize).min(n - val);
        (n - val - test, val, test)
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.99,
            val: 0.005,
            test: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded partition of `items`. Items for which `is_excluded` holds always
/// land in train. Each part keeps the input order.
pub fn split<T>(
    items: Vec<T>,
    ratios: SplitRatios,
    seed: u64,
    is_excluded: impl Fn(&T) -> bool,
) -> Result<Split<T>, SplitError> {
    let (_, n_val, n_test) = ratios.counts(items.len());
    let mut eligible: Vec<usize> = (0..items.len())
        .filter(|&i| !is_excluded(&items[i]))
        .collect();
    if eligible.len() < n_val + n_test {
        return Err(SplitError::NotEnoughEligible {
            needed: n_val + n_test,
            available: eligible.len(),
        });
    }
    eligible.shuffle(&mut seed::rng(seed));

    // 0 = train, 1 = val, 2 = test
    let mut part = alloc::vec![0u8; items.len()];
    for &i in &eligible[..n_val] {
        part[i] = 1;
    }
    for &i in &eligible[n_val..n_val + n_test] {
        part[i] = 2;
    }
    let mut out = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (item, p) in items.into_iter().zip(part) {
        match p {
            1 => out.val.push(item),
            2 => out.test.push(item),
            _ => out.train.push(item),
        }
    }
    Ok(out)
}

/// Draws `count` items from `sources` with probabilities proportional to
/// `weights`. Each source is walked in a seeded shuffled order and cycles
/// when exhausted. Returns `(source index, item)` pairs.
pub fn mix<T: Clone>(
    sources: &[Vec<T>],
    weights: &[f64],
    seed: u64,
    count: usize,
) -> Result<Vec<(usize, T)>, SplitError> {
    if sources.len() != weights.len() {
        return Err(SplitError::WeightCount {
            weights: weights.len(),
            sources: sources.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(SplitError::BadWeights);
    }
    if let Some(i) = (0..sources.len()).find(|&i| weights[i] > 0.0 && sources[i].is_empty()) {
        return Err(SplitError::EmptySource(i));
    }
    let dist = WeightedIndex::new(weights).map_err(|_| SplitError::BadWeights)?;

    let orders: Vec<Vec<usize>> = sources
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut o: Vec<usize> = (0..s.len()).collect();
            o.shuffle(&mut seed::rng(seed::derive_seed(
                seed,
                &alloc::format!("source{i}"),
            )));
            o
        })
        .collect();
    let mut cursors = alloc::vec![0usize; sources.len()];
    let mut rng = seed::rng(seed::derive_seed(seed, "mix"));
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let s = dist.sample(&mut rng);
        let idx = orders[s][cursors[s] % orders[s].len()];
        cursors[s] += 1;
        out.push((s, sources[s][idx].clone()));
    }
    Ok(out)
}
