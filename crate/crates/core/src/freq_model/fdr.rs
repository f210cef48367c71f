//! FDR estimation and the choice of cutoff and penalty.

use serde::Serialize;

use super::density::EmpiricalDensity;
use super::fit::NullMixtureFit;
use crate::error::{BincoError, Result};
use crate::ggm::EdgeSet;

/// Estimated FDR of keeping every edge with frequency at least `cutoff / B`,
/// clamped at one.
pub fn estimate_fdr(density: &EmpiricalDensity, fit: &NullMixtureFit, cutoff: usize) -> Result<f64> {
    let observed = density.tail(cutoff);
    if !(observed > 0.0) {
        return Err(BincoError::EmptyTail);
    }
    let null: f64 = fit.null_mass[cutoff.min(fit.null_mass.len())..].iter().sum();
    Ok(((1.0 - fit.pi_hat) * null / observed).min(1.0))
}

/// Smallest lattice cutoff in `1..=B` whose estimated FDR is at most `alpha`.
pub fn optimal_cutoff(density: &EmpiricalDensity, fit: &NullMixtureFit, alpha: f64) -> Option<usize> {
    (1..=density.resamples()).find(|&k| matches!(estimate_fdr(density, fit, k), Ok(fdr) if fdr <= alpha))
}

/// Estimated number of true edges in a selection of `set_size` edges.
pub fn estimate_true_edges(set_size: usize, fdr: f64) -> f64 {
    set_size as f64 * (1.0 - fdr)
}

/// One row of the penalty search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaCandidate {
    pub lambda: f64,
    pub l: f64,
    /// Lattice index of the chosen cutoff, if any qualifies.
    pub cutoff: Option<usize>,
    pub n_true_hat: f64,
    pub u_shaped: bool,
}

/// Index of the candidate with the largest estimated number of true edges
/// among U-shaped candidates that have a cutoff; ties go to the larger
/// penalty. `None` means no signal.
pub fn select_lambda(candidates: &[LambdaCandidate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (idx, c) in candidates.iter().enumerate() {
        if !c.u_shaped || c.cutoff.is_none() {
            continue;
        }
        best = match best {
            None => Some(idx),
            Some(b) => {
                let cur = &candidates[b];
                if c.n_true_hat > cur.n_true_hat || (c.n_true_hat == cur.n_true_hat && c.lambda > cur.lambda) {
                    Some(idx)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

/// Final selection with its estimated error rate.
#[derive(Debug, Clone)]
pub struct NetworkEstimate {
    pub edges: EdgeSet,
    /// Frequency cutoff `c*`.
    pub c_star: f64,
    /// Lattice index of `c*`.
    pub cutoff: usize,
    pub lambda_star: f64,
    pub l_star: f64,
    pub fdr_hat: f64,
    pub n_true_hat: f64,
    pub alpha: f64,
    pub fit: NullMixtureFit,
}
