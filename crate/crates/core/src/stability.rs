//! Stability selection over a penalty grid.
//!
//! An edge is kept when its largest selection frequency across the grid
//! reaches a threshold `t`. The threshold is the smallest lattice value above
//! one half whose error proxy `q^2 / ((2t - 1) N |S(t)|)` is at most the
//! target level.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{BincoError, Result};
use crate::ggm::{Edge, EdgeSet};
use crate::resample::FrequencyTable;

/// Largest selection count of each edge across tables that share a
/// resampling plan. All counts are over the same `B` resamples.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxFrequencies {
    pub counts: BTreeMap<Edge, u32>,
    pub resamples: usize,
    pub p: usize,
}

impl MaxFrequencies {
    pub fn frequency(&self, e: &Edge) -> f64 {
        self.counts.get(e).copied().unwrap_or(0) as f64 / self.resamples as f64
    }

    /// Edges whose maximal count is at least `k`.
    pub fn at_least(&self, k: u32) -> EdgeSet {
        self.counts
            .iter()
            .filter(|&(_, &c)| c >= k.max(1))
            .map(|(e, _)| *e)
            .collect()
    }
}

pub fn max_frequencies(tables: &[FrequencyTable]) -> Result<MaxFrequencies> {
    let first = tables
        .first()
        .ok_or_else(|| BincoError::InconsistentTables("no tables".into()))?;
    let c0 = &first.config;
    for t in &tables[1..] {
        let c = &t.config;
        if c.p != c0.p || c.resamples != c0.resamples || c.seed != c0.seed || c.scheme != c0.scheme {
            return Err(BincoError::InconsistentTables(format!(
                "table at lambda={} does not share the resampling plan of lambda={}",
                c.lambda, c0.lambda
            )));
        }
    }
    let mut counts = BTreeMap::new();
    for t in tables {
        for (e, c) in t.iter() {
            let slot = counts.entry(*e).or_insert(0u32);
            *slot = (*slot).max(c);
        }
    }
    Ok(MaxFrequencies {
        counts,
        resamples: c0.resamples,
        p: c0.p,
    })
}

/// Mean size of the per-resample union of selected sets.
pub fn estimate_q(union_sizes: &[usize]) -> f64 {
    if union_sizes.is_empty() {
        return 0.0;
    }
    union_sizes.iter().sum::<usize>() as f64 / union_sizes.len() as f64
}

/// Bound on the expected number of false selections at threshold `t`, and
/// the same bound divided by the selection size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProxyBound {
    pub expected_false: f64,
    pub proxy: f64,
}

pub fn fdr_proxy_bound(q_hat: f64, t: f64, n_omega: usize, set_size: usize) -> Result<ProxyBound> {
    if !(t > 0.5) {
        return Err(BincoError::ThresholdTooLow(t));
    }
    if set_size == 0 {
        return Err(BincoError::EmptySelection);
    }
    let expected_false = q_hat * q_hat / ((2.0 * t - 1.0) * n_omega as f64);
    Ok(ProxyBound {
        expected_false,
        proxy: expected_false / set_size as f64,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityResult {
    pub t_star: f64,
    /// Lattice index of `t_star` (a count out of `B`).
    pub cutoff: usize,
    #[serde(skip)]
    pub edges: EdgeSet,
    pub q_hat: f64,
    pub bound_at_t: f64,
    pub expected_false: f64,
}

/// Smallest lattice threshold in `(0.5, 1]` whose proxy is at most `alpha`,
/// with `|S(t)|` re-evaluated at every candidate. `None` if no threshold
/// qualifies.
pub fn stability_select(max: &MaxFrequencies, q_hat: f64, alpha: f64) -> Option<StabilityResult> {
    let b = max.resamples;
    let n_omega = max.p * (max.p - 1) / 2;
    for k in (b / 2 + 1)..=b {
        let t = k as f64 / b as f64;
        if t <= 0.5 {
            continue;
        }
        let edges = max.at_least(k as u32);
        let Ok(bound) = fdr_proxy_bound(q_hat, t, n_omega, edges.len()) else {
            continue;
        };
        if bound.proxy <= alpha {
            return Some(StabilityResult {
                t_star: t,
                cutoff: k,
                edges,
                q_hat,
                bound_at_t: bound.proxy,
                expected_false: bound.expected_false,
            });
        }
    }
    None
}
