//! Fitting the null component on a frequency range.

use serde::Serialize;

use super::density::{range_indices, EmpiricalDensity};
use super::null_model::{null_masses, null_masses_at, PoweredBetaParams};
use crate::error::{BincoError, Result};

/// Minimum number of positive-mass lattice points inside the fitting range.
pub const MIN_RANGE_POINTS: usize = 4;

const PI_CEILING: f64 = 1.0 - 1e-6;
const LOG_BOUND: f64 = 6.907_755_278_982_137; // ln(1000)
const SIMPLEX_TOL: f64 = 1e-10;
const SIMPLEX_MAX_ITER: usize = 2000;

#[derive(Debug, Clone, Serialize)]
pub struct NullMixtureFit {
    pub pi_hat: f64,
    pub params: PoweredBetaParams,
    /// Fitting range `(v1, v2]`.
    pub fit_range: (f64, f64),
    /// Fitting objective at the optimum.
    pub objective: f64,
    /// Null probabilities on the full lattice `0..=B`.
    #[serde(skip)]
    pub null_mass: Vec<f64>,
}

impl NullMixtureFit {
    /// Fitted null contribution `(1 - pi) h(k / B)`.
    pub fn scaled_null(&self) -> Vec<f64> {
        self.null_mass.iter().map(|h| (1.0 - self.pi_hat) * h).collect()
    }
}

/// Generalized Kullback-Leibler divergence of the scaled null `s h` from
/// the empirical mass on the range, with the scale profiled out:
/// `s = min(1, F / H)` for range totals `F` and `H`. When `s < 1` this is the
/// cross-entropy of the range-renormalized null up to a constant; at `s = 1`
/// it also penalizes nulls that carry too little mass on the range.
fn profile_divergence(density: &EmpiricalDensity, ks: &[usize], params: &PoweredBetaParams) -> f64 {
    let h = match null_masses_at(density.resamples(), params, ks) {
        Ok(h) => h,
        Err(_) => return f64::INFINITY,
    };
    let h_total: f64 = h.iter().sum();
    if !(h_total > 0.0) {
        return f64::INFINITY;
    }
    let f_total: f64 = ks.iter().map(|&k| density.mass()[k]).sum();
    let scale = (f_total / h_total).min(1.0);
    let mut value = scale * h_total - f_total;
    for (&k, &hk) in ks.iter().zip(&h) {
        let f = density.mass()[k];
        if f > 0.0 {
            if hk <= 0.0 {
                return f64::INFINITY;
            }
            value += f * (f / (scale * hk)).ln();
        }
    }
    value
}

/// Nelder-Mead simplex minimization; returns the best vertex and its value.
pub(crate) fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, start: &[f64], step: f64) -> (Vec<f64>, f64) {
    let dim = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for d in 0..dim {
        let mut v = start.to_vec();
        v[d] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    for _ in 0..SIMPLEX_MAX_ITER {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        if (values[dim] - values[0]).abs() < SIMPLEX_TOL {
            break;
        }
        let centroid: Vec<f64> = (0..dim)
            .map(|d| simplex[..dim].iter().map(|v| v[d]).sum::<f64>() / dim as f64)
            .collect();
        let toward = |coef: f64| -> Vec<f64> {
            (0..dim)
                .map(|d| centroid[d] + coef * (simplex[dim][d] - centroid[d]))
                .collect()
        };
        let reflected = toward(-1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = toward(-2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[dim] = expanded;
                values[dim] = fe;
            } else {
                simplex[dim] = reflected;
                values[dim] = fr;
            }
        } else if fr < values[dim - 1] {
            simplex[dim] = reflected;
            values[dim] = fr;
        } else {
            let (contracted, fc) = if fr < values[dim] {
                let c = toward(-0.5);
                let v = f(&c);
                (c, v)
            } else {
                let c = toward(0.5);
                let v = f(&c);
                (c, v)
            };
            if fc < values[dim].min(fr) {
                simplex[dim] = contracted;
                values[dim] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=dim {
                    for (x, b) in simplex[i].iter_mut().zip(&best) {
                        *x = b + 0.5 * (*x - b);
                    }
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=dim).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    (simplex[best].clone(), values[best])
}

/// Starting points for the multistart search, as `(a, b, gamma)`.
pub const MULTISTARTS: [(f64, f64, f64); 8] = [
    (0.3, 2.0, 0.5),
    (0.3, 2.0, 2.0),
    (0.3, 20.0, 0.5),
    (0.3, 20.0, 2.0),
    (2.0, 2.0, 0.5),
    (2.0, 2.0, 2.0),
    (2.0, 20.0, 0.5),
    (2.0, 20.0, 2.0),
];

fn params_from_logs(x: &[f64]) -> Option<PoweredBetaParams> {
    if x.iter().any(|v| !v.is_finite() || v.abs() > LOG_BOUND) {
        return None;
    }
    PoweredBetaParams::new(x[0].exp(), x[1].exp(), x[2].exp()).ok()
}

/// Fitting objective on `(v1, v2]` at the given parameters.
pub fn fit_objective(density: &EmpiricalDensity, v1: f64, v2: f64, params: &PoweredBetaParams) -> f64 {
    let ks: Vec<usize> = range_indices(density.resamples(), v1, v2).collect();
    profile_divergence(density, &ks, params)
}

/// Null proportion `pi` solving `(1 - pi) sum h = sum f` over `(v1, v2]`,
/// clamped to `[0, 1 - 1e-6]`.
pub fn match_null_proportion(density: &EmpiricalDensity, null_mass: &[f64], v1: f64, v2: f64) -> f64 {
    let ks = range_indices(density.resamples(), v1, v2);
    let f_range: f64 = ks.clone().map(|k| density.mass()[k]).sum();
    let h_range: f64 = ks.map(|k| null_mass[k]).sum();
    if h_range > 0.0 {
        (1.0 - f_range / h_range).clamp(0.0, PI_CEILING)
    } else {
        PI_CEILING
    }
}

/// Fits the null on `(v1, v2]` by minimizing the profiled divergence, then
/// sets the null proportion by matching the total mass on the range.
pub fn fit_null(density: &EmpiricalDensity, v1: f64, v2: f64) -> Result<NullMixtureFit> {
    if !(v1 >= 0.0 && v1 < v2 && v2 <= 1.0) {
        return Err(BincoError::InvalidParameter(format!("bad fitting range ({v1}, {v2}]")));
    }
    let ks: Vec<usize> = range_indices(density.resamples(), v1, v2).collect();
    let positive = ks.iter().filter(|&&k| density.mass()[k] > 0.0).count();
    if positive < MIN_RANGE_POINTS {
        return Err(BincoError::EmptyFitRange);
    }

    let objective = |x: &[f64]| match params_from_logs(x) {
        Some(params) => profile_divergence(density, &ks, &params),
        None => f64::INFINITY,
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for &(a, b, g) in &MULTISTARTS {
        let start = [a.ln(), b.ln(), g.ln()];
        let (x, v) = nelder_mead(objective, &start, 0.5);
        // polish from the best vertex with a fresh simplex
        let (x, v) = {
            let (x2, v2) = nelder_mead(objective, &x, 0.1);
            if v2 <= v {
                (x2, v2)
            } else {
                (x, v)
            }
        };
        if v.is_finite() && best.as_ref().is_none_or(|(_, bv)| v < *bv) {
            best = Some((x, v));
        }
    }
    let (x, value) = best.ok_or(BincoError::OptimizerFailure)?;
    let params = params_from_logs(&x).ok_or(BincoError::OptimizerFailure)?;
    let null_mass = null_masses(density.resamples(), &params)?;

    let pi_hat = match_null_proportion(density, &null_mass, v1, v2);
    Ok(NullMixtureFit {
        pi_hat,
        params,
        fit_range: (v1, v2),
        objective: value,
        null_mass,
    })
}
