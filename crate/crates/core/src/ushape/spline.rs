//! Cubic smoothing spline on an equally spaced grid (Reinsch form).
//!
//! The fitted values solve `(I + alpha K) f = y` with `K = Q R^-1 Q^T` the
//! roughness penalty of the natural cubic spline through `f`. `K` is
//! diagonalized once so that fits and effective degrees of freedom are cheap
//! for any `alpha`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub struct SmoothingSpline {
    basis: DMatrix<f64>,
    eigenvalues: DVector<f64>,
}

impl SmoothingSpline {
    /// Prepares the smoother for `m >= 3` points spaced `step` apart.
    pub fn new(m: usize, step: f64) -> Self {
        assert!(m >= 3, "smoothing needs at least three points");
        let h = step;
        let mut q = DMatrix::<f64>::zeros(m, m - 2);
        let mut r = DMatrix::<f64>::zeros(m - 2, m - 2);
        for c in 0..(m - 2) {
            q[(c, c)] = 1.0 / h;
            q[(c + 1, c)] = -2.0 / h;
            q[(c + 2, c)] = 1.0 / h;
            r[(c, c)] = 2.0 * h / 3.0;
            if c + 1 < m - 2 {
                r[(c, c + 1)] = h / 6.0;
                r[(c + 1, c)] = h / 6.0;
            }
        }
        let r_inv_qt = r
            .cholesky()
            .expect("spline band matrix is positive definite")
            .solve(&q.transpose());
        let mut k = &q * r_inv_qt;
        // symmetrize against rounding before the eigen solve
        k = (&k + k.transpose()) * 0.5;
        let eig = SymmetricEigen::new(k);
        // the two null-space eigenvalues (lines) come back as rounding noise
        let top = eig.eigenvalues.max();
        let eigenvalues = eig.eigenvalues.map(|v| if v < 1e-9 * top { 0.0 } else { v });
        SmoothingSpline {
            basis: eig.eigenvectors,
            eigenvalues,
        }
    }

    /// Effective degrees of freedom (trace of the smoother matrix).
    pub fn df(&self, alpha: f64) -> f64 {
        self.eigenvalues.iter().map(|mu| 1.0 / (1.0 + alpha * mu)).sum()
    }

    /// Penalty weight giving `target` degrees of freedom (`2 < target < m`).
    pub fn alpha_for_df(&self, target: f64) -> f64 {
        let (mut lo, mut hi) = (-80.0f64, 80.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.df(mid.exp()) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi)).exp()
    }

    pub fn fit(&self, y: &[f64], alpha: f64) -> Vec<f64> {
        let y = DVector::from_column_slice(y);
        let coef = self.basis.tr_mul(&y);
        let shrunk = DVector::from_iterator(
            coef.len(),
            coef.iter()
                .zip(self.eigenvalues.iter())
                .map(|(c, mu)| c / (1.0 + alpha * mu)),
        );
        (&self.basis * shrunk).iter().copied().collect()
    }
}

/// Sign changes in the successive increments of `values`, ignoring
/// increments below a relative noise floor.
pub fn derivative_sign_changes(values: &[f64]) -> usize {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-10 * scale;
    let mut last = 0i8;
    let mut changes = 0;
    for w in values.windows(2) {
        let d = w[1] - w[0];
        let s = if d > floor {
            1
        } else if d < -floor {
            -1
        } else {
            0
        };
        if s != 0 {
            if last != 0 && s != last {
                changes += 1;
            }
            last = s;
        }
    }
    changes
}
