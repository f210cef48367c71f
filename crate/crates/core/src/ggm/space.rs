//! Joint sparse partial-correlation regression.
//!
//! Minimizes
//!
//! ```text
//! 1/2 sum_i || y_i - sum_{j != i} sqrt(s_jj / s_ii) rho_ij y_j ||^2 + sum_{i<j} (lambda / w_ij) |rho_ij|
//! ```
//!
//! over the symmetric `rho` for fixed diagonal `s`, alternating with updates of
//! `s_ii` as the inverse residual variance of node `i`. Everything is computed
//! from the Gram matrix `X^T X`, so an update of `rho_ij` costs `O(p)`.

use nalgebra::DMatrix;

use super::{penalty_matrix, soft_threshold, SolverOptions, WeightMatrix};
use crate::data::DataMatrix;
use crate::error::{BincoError, Result};

#[derive(Debug, Clone)]
pub struct SpaceEstimate {
    /// Estimated partial correlations, symmetric with unit diagonal.
    pub rho: DMatrix<f64>,
    /// Diagonal of the concentration matrix used for the final coefficient solve.
    pub sigma_diag: Vec<f64>,
    pub lambda: f64,
    pub weights: Option<WeightMatrix>,
    pub converged: bool,
    /// Total sweeps over all outer rounds.
    pub iterations: usize,
    /// Objective after each sweep, one vector per outer round (when recorded).
    pub objective_trace: Vec<Vec<f64>>,
}

struct State<'a> {
    gram: &'a DMatrix<f64>,
    pen: DMatrix<f64>,
    rho: DMatrix<f64>,
    sigma: Vec<f64>,
    // cross[(k, i)] = x_k . r_i, where r_i is the residual of node i
    cross: DMatrix<f64>,
}

impl State<'_> {
    fn p(&self) -> usize {
        self.gram.nrows()
    }

    fn coef(&self, i: usize, m: usize) -> f64 {
        if self.sigma[m] == self.sigma[i] {
            self.rho[(i, m)]
        } else {
            self.rho[(i, m)] * (self.sigma[m] / self.sigma[i]).sqrt()
        }
    }

    fn ratio(&self, i: usize, j: usize) -> f64 {
        if self.sigma[i] == self.sigma[j] {
            1.0
        } else {
            (self.sigma[j] / self.sigma[i]).sqrt()
        }
    }

    fn rebuild_cross(&mut self) {
        let p = self.p();
        let mut b = DMatrix::<f64>::zeros(p, p);
        for i in 0..p {
            for m in 0..p {
                if m != i {
                    b[(i, m)] = self.coef(i, m);
                }
            }
        }
        // C = S (I - B^T)
        let mut ib = -b.transpose();
        for d in 0..p {
            ib[(d, d)] += 1.0;
        }
        self.cross = self.gram * ib;
    }

    fn rss(&self, i: usize) -> f64 {
        let p = self.p();
        let mut v = self.cross[(i, i)];
        for m in 0..p {
            if m != i {
                v -= self.coef(i, m) * self.cross[(m, i)];
            }
        }
        v
    }

    fn objective(&self) -> f64 {
        let p = self.p();
        let mut loss = 0.0;
        for i in 0..p {
            loss += 0.5 * self.rss(i);
            for j in (i + 1)..p {
                loss += self.pen[(i, j)] * self.rho[(i, j)].abs();
            }
        }
        loss
    }

    /// Exact minimization over one coordinate; returns the absolute change.
    fn update(&mut self, i: usize, j: usize) -> f64 {
        let c1 = self.ratio(i, j);
        let c2 = 1.0 / c1;
        let a = c1 * c1 * self.gram[(j, j)] + c2 * c2 * self.gram[(i, i)];
        let z = c1 * self.cross[(j, i)] + c2 * self.cross[(i, j)];
        let old = self.rho[(i, j)];
        let new = soft_threshold(a * old + z, self.pen[(i, j)]) / a;
        if new == old {
            return 0.0;
        }
        let delta = new - old;
        let p = self.p();
        for k in 0..p {
            self.cross[(k, i)] -= delta * c1 * self.gram[(k, j)];
        }
        for k in 0..p {
            self.cross[(k, j)] -= delta * c2 * self.gram[(k, i)];
        }
        self.rho[(i, j)] = new;
        self.rho[(j, i)] = new;
        delta.abs()
    }

    fn full_sweep(&mut self) -> f64 {
        let p = self.p();
        let mut max_delta = 0.0f64;
        for i in 0..p {
            for j in (i + 1)..p {
                max_delta = max_delta.max(self.update(i, j));
            }
        }
        max_delta
    }

    fn active_sweep(&mut self) -> f64 {
        let p = self.p();
        let mut max_delta = 0.0f64;
        for i in 0..p {
            for j in (i + 1)..p {
                if self.rho[(i, j)] != 0.0 {
                    max_delta = max_delta.max(self.update(i, j));
                }
            }
        }
        max_delta
    }

    /// Active-set coordinate descent; returns (converged, sweeps used).
    fn solve(&mut self, opts: &SolverOptions, trace: &mut Vec<f64>) -> (bool, usize) {
        let mut sweeps = 0;
        while sweeps < opts.max_sweeps {
            let delta = self.full_sweep();
            sweeps += 1;
            if opts.record_objective {
                trace.push(self.objective());
            }
            if delta < opts.tol {
                return (true, sweeps);
            }
            while sweeps < opts.max_sweeps {
                let delta = self.active_sweep();
                sweeps += 1;
                if opts.record_objective {
                    trace.push(self.objective());
                }
                if delta < opts.tol {
                    break;
                }
            }
        }
        (false, sweeps)
    }
}

/// Fits the joint regression on standardized data.
pub fn fit_space(
    data: &DataMatrix,
    lambda: f64,
    weights: Option<&WeightMatrix>,
    opts: &SolverOptions,
) -> Result<SpaceEstimate> {
    fit_space_gram(&data.gram(), data.n(), lambda, weights, opts)
}

/// Same as [`fit_space`] from a precomputed Gram matrix and sample size.
pub fn fit_space_gram(
    gram: &DMatrix<f64>,
    n: usize,
    lambda: f64,
    weights: Option<&WeightMatrix>,
    opts: &SolverOptions,
) -> Result<SpaceEstimate> {
    let p = gram.nrows();
    if gram.ncols() != p {
        return Err(BincoError::DimensionMismatch("gram matrix is not square".into()));
    }
    if n < 2 {
        return Err(BincoError::InvalidParameter("need at least two samples".into()));
    }
    let pen = penalty_matrix(p, lambda, weights)?;
    let mut state = State {
        gram,
        pen,
        rho: DMatrix::identity(p, p),
        sigma: vec![1.0; p],
        cross: gram.clone(),
    };
    // diagonal of rho stays 1 but never enters the loss
    let rounds = opts.outer_rounds.max(1);
    let mut converged = true;
    let mut iterations = 0;
    let mut traces = Vec::with_capacity(rounds);
    for round in 0..rounds {
        if round > 0 {
            state.rebuild_cross();
        }
        let mut trace = Vec::new();
        let (ok, sweeps) = state.solve(opts, &mut trace);
        converged &= ok;
        iterations += sweeps;
        traces.push(trace);
        if round + 1 < rounds {
            let rss: Vec<f64> = (0..p)
                .map(|i| {
                    let floor = 1e-12 * gram[(i, i)].max(f64::MIN_POSITIVE);
                    state.rss(i).max(floor)
                })
                .collect();
            for (s, r) in state.sigma.iter_mut().zip(rss) {
                *s = n as f64 / r;
            }
        }
    }
    if !converged {
        log::debug!("joint regression hit the sweep budget at lambda={lambda}");
    }
    Ok(SpaceEstimate {
        rho: state.rho,
        sigma_diag: state.sigma,
        lambda,
        weights: weights.cloned(),
        converged,
        iterations,
        objective_trace: traces,
    })
}

fn state_for<'a>(gram: &'a DMatrix<f64>, est: &SpaceEstimate) -> Result<State<'a>> {
    let p = gram.nrows();
    let pen = penalty_matrix(p, est.lambda, est.weights.as_ref())?;
    let mut state = State {
        gram,
        pen,
        rho: est.rho.clone(),
        sigma: est.sigma_diag.clone(),
        cross: gram.clone(),
    };
    state.rebuild_cross();
    Ok(state)
}

/// Objective value of an estimate at its own diagonal and penalty.
pub fn space_objective(gram: &DMatrix<f64>, est: &SpaceEstimate) -> Result<f64> {
    Ok(state_for(gram, est)?.objective())
}

/// Largest violation of the subgradient optimality conditions in `rho`
/// (with the diagonal held at `est.sigma_diag`).
pub fn space_kkt_residual(gram: &DMatrix<f64>, est: &SpaceEstimate) -> Result<f64> {
    let state = state_for(gram, est)?;
    let p = gram.nrows();
    let mut worst = 0.0f64;
    for i in 0..p {
        for j in (i + 1)..p {
            let c1 = state.ratio(i, j);
            let c2 = 1.0 / c1;
            let grad = -(c1 * state.cross[(j, i)] + c2 * state.cross[(i, j)]);
            let pen = state.pen[(i, j)];
            let r = state.rho[(i, j)];
            let v = if r != 0.0 {
                (grad + pen * r.signum()).abs()
            } else {
                (grad.abs() - pen).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    Ok(worst)
}
