//! Hierarchical correspondence filtering.
//!
//! Each layer scores every correspondence by second-order spatial
//! consistency and keeps the best fraction; stacking layers purges outliers
//! progressively instead of in one cut.

use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::matching::{Correspondence, CorrespondenceSet};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Consistency threshold σ_d in meters.
    pub sigma_d: f64,
    /// Fraction kept per layer, in (0, 1].
    pub keep_ratio: f64,
    pub layers: usize,
    /// Layers never cut below this many correspondences.
    pub min_survivors: usize,
    /// Inputs above this size are rejected (the score matrix is quadratic).
    pub max_correspondences: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            sigma_d: 0.1,
            keep_ratio: 0.8,
            layers: 5,
            min_survivors: 10,
            max_correspondences: 10_000,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_d > 0.0 && self.sigma_d.is_finite()) {
            return Err(Error::Config("filter sigma_d must be positive".into()));
        }
        if !(self.keep_ratio > 0.0 && self.keep_ratio <= 1.0) {
            return Err(Error::Config("filter keep_ratio must lie in (0, 1]".into()));
        }
        if self.max_correspondences < 2 {
            return Err(Error::Config("filter max_correspondences must be at least 2".into()));
        }
        Ok(())
    }

    /// `max(⌈keep_ratio·n⌉, min(min_survivors, n))`.
    pub fn retained_count(&self, n: usize) -> usize {
        let exact = self.keep_ratio * n as f64;
        let nearest = exact.round();
        // 0.8 · 10 lands a hair above 8 in binary; do not let that round up
        let ceil = if (exact - nearest).abs() < 1e-9 {
            nearest
        } else {
            exact.ceil()
        } as usize;
        ceil.min(n).max(self.min_survivors.min(n))
    }
}

/// One filtering layer: what came in, who survived, and the scores used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub input_count: usize,
    /// Positions (into this layer's input) of the survivors, ascending.
    pub retained: Vec<usize>,
    /// Second-order row-sum of every input correspondence.
    pub row_sums: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterTrace {
    pub layers: Vec<LayerRecord>,
}

impl FilterTrace {
    /// Row-sums of the final survivors from the last layer, in output order.
    pub fn final_scores(&self) -> Option<Vec<u64>> {
        let last = self.layers.last()?;
        Some(last.retained.iter().map(|&i| last.row_sums[i]).collect())
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.layers.iter().map(|l| l.input_count).collect();
        if let Some(last) = self.layers.last() {
            v.push(last.retained.len());
        }
        v
    }
}

/// `| ‖pₐ − p_b‖ − ‖qₐ − q_b‖ |`.
pub fn consistency_distance<T: Real>(a: &Correspondence<T>, b: &Correspondence<T>) -> T {
    ((a.source - b.source).norm() - (a.target - b.target).norm()).abs()
}

/// Symmetric binary consistency matrix as packed bit rows (diagonal set).
struct BitMatrix {
    words: usize,
    bits: Vec<u64>,
}

impl BitMatrix {
    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    fn get(&self, i: usize, j: usize) -> bool {
        self.row(i)[j / 64] >> (j % 64) & 1 == 1
    }
}

fn consistency_bits<T: Real>(pairs: &[Correspondence<T>], sigma_d: T) -> BitMatrix {
    let n = pairs.len();
    let words = n.div_ceil(64);
    let rows: Vec<Vec<u64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0u64; words];
            for (j, b) in pairs.iter().enumerate() {
                if i == j || consistency_distance(&pairs[i], b) <= sigma_d {
                    row[j / 64] |= 1 << (j % 64);
                }
            }
            row
        })
        .collect();
    BitMatrix {
        words,
        bits: rows.into_iter().flatten().collect(),
    }
}

fn and_popcount_portable(a: &[u64], b: &[u64]) -> u64 {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones() as u64).sum()
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt")]
unsafe fn and_popcount_hw(a: &[u64], b: &[u64]) -> u64 {
    and_popcount_portable(a, b)
}

/// `|a ∧ b|` over packed rows.
fn and_popcount(a: &[u64], b: &[u64]) -> u64 {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("popcnt") {
            // SAFETY: the CPU supports popcnt, checked just above.
            return unsafe { and_popcount_hw(a, b) };
        }
    }
    and_popcount_portable(a, b)
}

/// Row-sums `Σⱼ ssᵢⱼ` with `ssᵢⱼ = sᵢⱼ · Σₖ sᵢₖ sₖⱼ` and
/// `sᵢⱼ = 1(dᵢⱼ ≤ σ_d)`, `sᵢᵢ = 1`. Exact integer arithmetic.
pub fn second_order_scores<T: Real>(correspondences: &CorrespondenceSet<T>, sigma_d: T) -> Result<Vec<u64>> {
    let n = correspondences.len();
    if n < 2 {
        return Err(Error::TooFewCorrespondences {
            found: n,
            required: 2,
        });
    }
    let s = consistency_bits(&correspondences.pairs, sigma_d);
    // ssᵢⱼ is symmetric: evaluate j ≥ i once and credit both rows
    let totals: Vec<AtomicU64> = (0..n).map(|_| AtomicU64::new(0)).collect();
    (0..n).into_par_iter().for_each(|i| {
        let ri = s.row(i);
        let mut own = 0u64;
        for (w, &word) in ri.iter().enumerate().skip(i / 64) {
            let mut bits = if w == i / 64 { word & (!0u64 << (i % 64)) } else { word };
            while bits != 0 {
                let j = w * 64 + bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let common = and_popcount(ri, s.row(j));
                own += common;
                if j != i {
                    totals[j].fetch_add(common, AtomicOrdering::Relaxed);
                }
            }
        }
        totals[i].fetch_add(own, AtomicOrdering::Relaxed);
    });
    Ok(totals.into_iter().map(AtomicU64::into_inner).collect())
}

/// Binary consistency between two correspondences, exposed for diagnostics.
pub fn consistency_matrix<T: Real>(correspondences: &CorrespondenceSet<T>, sigma_d: T) -> Vec<Vec<bool>> {
    let n = correspondences.len();
    let s = consistency_bits(&correspondences.pairs, sigma_d);
    (0..n).map(|i| (0..n).map(|j| s.get(i, j)).collect()).collect()
}

fn check_size(n: usize, config: &FilterConfig) -> Result<()> {
    if n > config.max_correspondences {
        return Err(Error::TooManyCorrespondences {
            found: n,
            cap: config.max_correspondences,
        });
    }
    Ok(())
}

/// Keeps the best-scoring `retained_count(n)` correspondences (ties to the
/// smaller position) in their input order.
pub fn filter_layer<T: Real>(
    correspondences: &CorrespondenceSet<T>,
    config: &FilterConfig,
) -> Result<(CorrespondenceSet<T>, LayerRecord)> {
    config.validate()?;
    check_size(correspondences.len(), config)?;
    let row_sums = second_order_scores(correspondences, T::lit(config.sigma_d))?;
    let n = row_sums.len();
    let keep = config.retained_count(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| row_sums[b].cmp(&row_sums[a]).then(a.cmp(&b)));
    let mut retained = order[..keep].to_vec();
    retained.sort_unstable();
    let out = correspondences.select(&retained);
    Ok((
        out,
        LayerRecord {
            input_count: n,
            retained,
            row_sums,
        },
    ))
}

/// Applies [`filter_layer`] `config.layers` times, stopping early once the
/// set is down to `min_survivors`.
pub fn hierarchical_filter<T: Real>(
    correspondences: &CorrespondenceSet<T>,
    config: &FilterConfig,
) -> Result<(CorrespondenceSet<T>, FilterTrace)> {
    config.validate()?;
    let n = correspondences.len();
    if n < 2 {
        return Err(Error::TooFewCorrespondences {
            found: n,
            required: 2,
        });
    }
    check_size(n, config)?;
    let mut current = correspondences.clone();
    let mut trace = FilterTrace::default();
    for _ in 0..config.layers {
        if current.len() <= config.min_survivors.max(1) || current.len() < 2 {
            break;
        }
        let (next, record) = filter_layer(&current, config)?;
        trace.layers.push(record);
        current = next;
    }
    Ok((current, trace))
}
