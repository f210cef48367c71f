//! Per-node lasso regressions (neighborhood selection).

use nalgebra::DMatrix;

use super::{penalty_matrix, soft_threshold, Combine, Edge, EdgeSet, SolverOptions, WeightMatrix};
use crate::data::DataMatrix;
use crate::error::{BincoError, Result};

#[derive(Debug, Clone)]
pub struct NeighborhoodEstimate {
    /// Row `i` holds the coefficients of the regression of node `i` on the rest.
    pub beta: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl NeighborhoodEstimate {
    pub fn edges(&self, combine: Combine, zero_tol: f64) -> EdgeSet {
        let p = self.beta.nrows();
        let mut set = EdgeSet::new();
        for i in 0..p {
            for j in (i + 1)..p {
                let a = self.beta[(i, j)].abs() > zero_tol;
                let b = self.beta[(j, i)].abs() > zero_tol;
                let keep = match combine {
                    Combine::And => a && b,
                    Combine::Or => a || b,
                };
                if keep {
                    set.insert(Edge { i, j });
                }
            }
        }
        set
    }
}

/// Solves the lasso of node `target` on all other columns; returns the
/// coefficient vector, convergence flag and sweep count.
fn node_lasso(gram: &DMatrix<f64>, target: usize, pen: &DMatrix<f64>, opts: &SolverOptions) -> (Vec<f64>, bool, usize) {
    let p = gram.nrows();
    let mut beta = vec![0.0; p];
    // cross[k] = x_k . r
    let mut cross: Vec<f64> = gram.column(target).iter().copied().collect();

    let update = |j: usize, beta: &mut [f64], cross: &mut [f64]| -> f64 {
        let a = gram[(j, j)];
        let old = beta[j];
        let new = soft_threshold(a * old + cross[j], pen[(target, j)]) / a;
        if new == old {
            return 0.0;
        }
        let delta = new - old;
        for (k, c) in cross.iter_mut().enumerate() {
            *c -= delta * gram[(k, j)];
        }
        beta[j] = new;
        delta.abs()
    };

    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        let mut delta = 0.0f64;
        for j in (0..p).filter(|&j| j != target) {
            delta = delta.max(update(j, &mut beta, &mut cross));
        }
        sweeps += 1;
        if delta < opts.tol {
            return (beta, true, sweeps);
        }
        while sweeps < opts.max_sweeps {
            let mut delta = 0.0f64;
            for j in 0..p {
                if j != target && beta[j] != 0.0 {
                    delta = delta.max(update(j, &mut beta, &mut cross));
                }
            }
            sweeps += 1;
            if delta < opts.tol {
                break;
            }
        }
    }
    (beta, false, sweeps)
}

/// Fits all `p` node-wise lasso regressions from a Gram matrix.
pub fn fit_neighborhood_gram(
    gram: &DMatrix<f64>,
    lambda: f64,
    weights: Option<&WeightMatrix>,
    opts: &SolverOptions,
) -> Result<NeighborhoodEstimate> {
    let p = gram.nrows();
    if gram.ncols() != p {
        return Err(BincoError::DimensionMismatch("gram matrix is not square".into()));
    }
    let pen = penalty_matrix(p, lambda, weights)?;
    let mut beta = DMatrix::zeros(p, p);
    let mut converged = true;
    let mut iterations = 0;
    for i in 0..p {
        let (row, ok, sweeps) = node_lasso(gram, i, &pen, opts);
        for (j, v) in row.into_iter().enumerate() {
            beta[(i, j)] = v;
        }
        converged &= ok;
        iterations += sweeps;
    }
    Ok(NeighborhoodEstimate {
        beta,
        converged,
        iterations,
    })
}

/// Neighborhood selection on standardized data, combined into an edge set.
pub fn fit_neighborhood(
    data: &DataMatrix,
    lambda: f64,
    weights: Option<&WeightMatrix>,
    combine: Combine,
    opts: &SolverOptions,
) -> Result<EdgeSet> {
    let est = fit_neighborhood_gram(&data.gram(), lambda, weights, opts)?;
    Ok(est.edges(combine, super::DEFAULT_ZERO_TOL))
}
