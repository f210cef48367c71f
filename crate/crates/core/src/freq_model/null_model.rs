//! Binomial counts mixed over a powered beta prior.
//!
//! For `Q ~ Beta(a, b)` and `T = Q^gamma`, the null probability of `k`
//! selections out of `B` is `E[C(B, k) T^k (1 - T)^(B - k)]`. The expectation
//! is integrated over `q` with double-exponential (tanh-sinh) quadrature,
//! which absorbs the endpoint singularities of the beta density when `a` or
//! `b` is below one. All lattice points share the same nodes.

use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::factorial::ln_binomial;

use crate::error::{BincoError, Result};

/// Shape parameters of the powered beta prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoweredBetaParams {
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
}

impl PoweredBetaParams {
    pub fn new(a: f64, b: f64, gamma: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(a) && ok(b) && ok(gamma) {
            Ok(PoweredBetaParams { a, b, gamma })
        } else {
            Err(BincoError::InvalidParameter(format!(
                "powered beta parameters must be positive, got ({a}, {b}, {gamma})"
            )))
        }
    }
}

/// Absolute tolerance between successive quadrature levels.
const LEVEL_TOL: f64 = 1e-12;
const MAX_LEVEL: u32 = 12;
const FIRST_STEP: f64 = 0.5;
/// log of the smallest integrand magnitude kept when truncating the t range.
const LOG_CUTOFF: f64 = -46.0;

fn softplus(y: f64) -> f64 {
    if y > 35.0 {
        y + (-y).exp().ln_1p()
    } else {
        y.exp().ln_1p()
    }
}

struct Kernel {
    trials: usize,
    params: PoweredBetaParams,
    ln_norm: f64,
    ln_binom: Vec<f64>,
}

impl Kernel {
    fn new(trials: usize, params: PoweredBetaParams) -> Self {
        let ln_binom = (0..=trials).map(|k| ln_binomial(trials as u64, k as u64)).collect();
        Kernel {
            trials,
            params,
            ln_norm: ln_beta(params.a, params.b),
            ln_binom,
        }
    }

    /// log of the beta part of the transformed integrand at node `t`, and
    /// the logs of `q^gamma` and `1 - q^gamma`.
    fn node(&self, t: f64) -> (f64, f64, f64) {
        let x = std::f64::consts::PI * t.sinh();
        let ln_q = -softplus(-x);
        let ln_1mq = -softplus(x);
        // dq/dt = q (1 - q) pi cosh t
        let ln_beta_part =
            self.params.a * ln_q + self.params.b * ln_1mq - self.ln_norm + std::f64::consts::PI.ln() + t.cosh().ln();
        let ln_t = self.params.gamma * ln_q;
        let ln_1mt = if ln_t == 0.0 {
            f64::NEG_INFINITY
        } else {
            (-ln_t.exp_m1()).ln()
        };
        (ln_beta_part, ln_t, ln_1mt)
    }

    fn accumulate(&self, t: f64, ks: &[usize], acc: &mut [f64]) {
        let (base, ln_t, ln_1mt) = self.node(t);
        if base < LOG_CUTOFF - 60.0 {
            return;
        }
        for (slot, &k) in acc.iter_mut().zip(ks) {
            let mut v = base + self.ln_binom[k];
            if k > 0 {
                v += k as f64 * ln_t;
            }
            if k < self.trials {
                v += (self.trials - k) as f64 * ln_1mt;
            }
            if v > -745.0 {
                *slot += v.exp();
            }
        }
    }

    /// Furthest node in direction `dir` worth keeping at the coarsest step.
    fn extent(&self, dir: f64) -> f64 {
        let mut t = 0.0;
        let mut prev = f64::INFINITY;
        loop {
            let next = t + dir * FIRST_STEP;
            let (v, _, _) = self.node(next);
            let past_min = next.abs() >= 3.0;
            if (past_min && v < LOG_CUTOFF && v <= prev) || next.abs() > 25.0 {
                return next;
            }
            prev = v;
            t = next;
        }
    }
}

/// Null probabilities for the lattice points `ks` (each in `0..=trials`).
pub fn null_masses_at(trials: usize, params: &PoweredBetaParams, ks: &[usize]) -> Result<Vec<f64>> {
    if let Some(&bad) = ks.iter().find(|&&k| k > trials) {
        return Err(BincoError::InvalidParameter(format!("k = {bad} exceeds B = {trials}")));
    }
    let kernel = Kernel::new(trials, *params);
    let lo = kernel.extent(-1.0);
    let hi = kernel.extent(1.0);
    let j_lo = (lo / FIRST_STEP).round() as i64;
    let j_hi = (hi / FIRST_STEP).round() as i64;

    // raw sums of the integrand over the nodes visited so far
    let mut sums = vec![0.0; ks.len()];
    for j in j_lo..=j_hi {
        kernel.accumulate(j as f64 * FIRST_STEP, ks, &mut sums);
    }
    let mut h = FIRST_STEP;
    let mut estimate: Vec<f64> = sums.iter().map(|s| s * h).collect();
    let mut change = f64::INFINITY;
    for level in 1..=MAX_LEVEL {
        h /= 2.0;
        // new nodes are the odd multiples of h
        let span = 1i64 << level;
        let first = j_lo * span - 1;
        let last = j_hi * span + 1;
        let mut j = first;
        while j <= last {
            kernel.accumulate(j as f64 * h, ks, &mut sums);
            j += 2;
        }
        let next: Vec<f64> = sums.iter().map(|s| s * h).collect();
        change = next
            .iter()
            .zip(&estimate)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        estimate = next;
        if level >= 3 && change < LEVEL_TOL {
            return Ok(estimate);
        }
    }
    Err(BincoError::QuadratureFailure(change))
}

/// Null probabilities at every lattice point `0..=trials`.
pub fn null_masses(trials: usize, params: &PoweredBetaParams) -> Result<Vec<f64>> {
    let ks: Vec<usize> = (0..=trials).collect();
    null_masses_at(trials, params, &ks)
}

/// Probability of `k` selections out of `trials` resamples under the null.
pub fn powered_beta_binomial_pmf(k: usize, trials: usize, params: &PoweredBetaParams) -> Result<f64> {
    Ok(null_masses_at(trials, params, &[k])?[0])
}
