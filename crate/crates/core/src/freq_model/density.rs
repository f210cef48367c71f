use serde::Serialize;

use crate::error::{BincoError, Result};
use crate::resample::FrequencyTable;

/// Empirical distribution of selection frequencies over the `B + 1` lattice
/// points `k / B`, normalized by the number of candidate edges.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalDensity {
    mass: Vec<f64>,
    n_omega: usize,
}

impl EmpiricalDensity {
    /// Tabulates a frequency table; never-selected pairs land at `k = 0`.
    pub fn from_table(table: &FrequencyTable, p: usize) -> Result<Self> {
        if p < 2 {
            return Err(BincoError::DimensionMismatch(format!("p = {p}")));
        }
        if let Some((e, _)) = table.iter().find(|(e, _)| e.j >= p) {
            return Err(BincoError::DimensionMismatch(format!(
                "edge ({}, {}) outside {p} variables",
                e.i + 1,
                e.j + 1
            )));
        }
        let b = table.resamples();
        let n_omega = p * (p - 1) / 2;
        let mut counts = vec![0usize; b + 1];
        for (_, c) in table.iter() {
            counts[c as usize] += 1;
        }
        counts[0] = n_omega - table.support_size();
        let mass = counts.iter().map(|&c| c as f64 / n_omega as f64).collect();
        Ok(EmpiricalDensity { mass, n_omega })
    }

    /// Wraps an explicit mass vector (length `B + 1`).
    pub fn from_mass(mass: Vec<f64>, n_omega: usize) -> Result<Self> {
        if mass.len() < 2 {
            return Err(BincoError::InvalidParameter(
                "density needs at least two lattice points".into(),
            ));
        }
        if mass.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(BincoError::InvalidParameter(
                "density mass must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(BincoError::InvalidParameter(format!("density mass sums to {total}")));
        }
        Ok(EmpiricalDensity { mass, n_omega })
    }

    /// Number of resamples `B`.
    pub fn resamples(&self) -> usize {
        self.mass.len() - 1
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn n_omega(&self) -> usize {
        self.n_omega
    }

    pub fn abscissa(&self, k: usize) -> f64 {
        k as f64 / self.resamples() as f64
    }

    /// Mass at lattice points `k >= cutoff`.
    pub fn tail(&self, cutoff: usize) -> f64 {
        self.mass[cutoff.min(self.mass.len())..].iter().sum()
    }

    /// Number of edges at or above lattice point `cutoff`.
    pub fn tail_count(&self, cutoff: usize) -> usize {
        (self.tail(cutoff) * self.n_omega as f64).round() as usize
    }
}

/// Lattice indices `k` with `v1 < k / B <= v2`.
pub fn range_indices(resamples: usize, v1: f64, v2: f64) -> std::ops::RangeInclusive<usize> {
    let b = resamples as f64;
    let eps = 1e-9;
    let lo = ((v1 * b + eps).floor() as i64 + 1).max(0) as usize;
    let hi = ((v2 * b + eps).floor() as i64).clamp(-1, resamples as i64);
    if hi < lo as i64 {
        return std::ops::RangeInclusive::new(1, 0);
    }
    lo..=hi as usize
}
