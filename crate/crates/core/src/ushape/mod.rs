//! U-shape screening of selection-frequency densities.
//!
//! A usable density falls at low frequencies and rises again near one. The
//! valley comes from a smoothing-spline fit of the density over `(0, 1]`; the
//! peak before it and the two half-interval mass checks use the raw density.

mod spline;

use serde::Serialize;

pub use spline::{derivative_sign_changes, SmoothingSpline};

use crate::error::{BincoError, Result};
use crate::freq_model::EmpiricalDensity;

/// Number of flexibility levels tried by [`smooth_density`].
pub const FLEX_GRID: usize = 30;
/// Least flexible setting on the grid (effective degrees of freedom).
pub const MIN_DF: f64 = 2.5;
/// Valleys above this frequency disqualify a density.
pub const MAX_VALLEY: f64 = 0.8;

/// Smoothed density on the lattice points `1..=B`.
#[derive(Debug, Clone)]
pub struct SmoothFit {
    /// `values[k - 1]` is the smoothed mass at `k / B`.
    pub values: Vec<f64>,
    pub df: f64,
    pub sign_changes: usize,
}

impl SmoothFit {
    pub fn at(&self, k: usize) -> f64 {
        self.values[k - 1]
    }
}

/// Effective degrees of freedom tried for `m` points, most flexible first.
pub fn flexibility_grid(m: usize) -> Vec<f64> {
    let hi = ((m - 1) as f64).clamp(MIN_DF + 0.5, 40.0);
    let ratio = (MIN_DF / hi).powf(1.0 / (FLEX_GRID - 1) as f64);
    (0..FLEX_GRID).map(|i| hi * ratio.powi(i as i32)).collect()
}

/// Fits a cubic smoothing spline to the density over `(0, 1]`, choosing the
/// most flexible setting on a fixed grid whose increments change sign
/// exactly once. Falls back to the least flexible setting.
pub fn smooth_density(density: &EmpiricalDensity) -> Result<SmoothFit> {
    smooth_mass(density.mass())
}

/// Same as [`smooth_density`] for an unnormalized mass vector indexed by
/// lattice count `0..=B`.
pub fn smooth_mass(mass: &[f64]) -> Result<SmoothFit> {
    let b = mass.len().saturating_sub(1);
    if b < 10 {
        return Err(BincoError::InvalidParameter(format!(
            "smoothing needs B >= 10, got {b}"
        )));
    }
    if mass.iter().filter(|&&m| m > 0.0).count() <= 1 {
        return Err(BincoError::DegenerateDensity);
    }
    let y = &mass[1..];
    let spline = SmoothingSpline::new(b, 1.0 / b as f64);
    let mut last = None;
    for df in flexibility_grid(b) {
        let values = spline.fit(y, spline.alpha_for_df(df));
        let sign_changes = derivative_sign_changes(&values);
        let fit = SmoothFit {
            values,
            df,
            sign_changes,
        };
        if sign_changes == 1 {
            return Ok(fit);
        }
        last = Some(fit);
    }
    Ok(last.expect("flexibility grid is nonempty"))
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct UShapeReport {
    /// Peak before the valley.
    pub v1: f64,
    /// Valley of the smoothed density.
    pub v2: f64,
    pub u_flag: bool,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub s4: f64,
    pub smoother_df: f64,
    pub sign_changes: usize,
    /// Why the density was rejected, if it was.
    pub reason: Option<String>,
}

impl UShapeReport {
    fn rejected(reason: impl Into<String>) -> Self {
        UShapeReport {
            v1: 0.0,
            v2: 0.0,
            u_flag: false,
            s1: 0.0,
            s2: 0.0,
            s3: 0.0,
            s4: 0.0,
            smoother_df: 0.0,
            sign_changes: 0,
            reason: Some(reason.into()),
        }
    }
}

/// First index of the extreme value under `better`; ties keep the earlier index.
fn arg_extreme(
    range: impl Iterator<Item = usize>,
    value: impl Fn(usize) -> f64,
    better: impl Fn(f64, f64) -> bool,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for k in range {
        let v = value(k);
        if best.is_none_or(|(_, bv)| better(v, bv)) {
            best = Some((k, v));
        }
    }
    best.map(|(k, _)| k)
}

/// Runs the U-shape screen and reports the peak and valley used as the
/// mixture fitting range.
pub fn detect_ushape(density: &EmpiricalDensity) -> UShapeReport {
    detect_ushape_mass(density.mass())
}

/// Same as [`detect_ushape`] for an unnormalized mass vector indexed by
/// lattice count `0..=B`. Rescaling `mass` rescales the four sums and leaves
/// everything else unchanged.
pub fn detect_ushape_mass(mass: &[f64]) -> UShapeReport {
    let smooth = match smooth_mass(mass) {
        Ok(s) => s,
        Err(e) => return UShapeReport::rejected(e.to_string()),
    };
    let b = mass.len() - 1;
    let abscissa = |k: usize| k as f64 / b as f64;
    let sum = |lo: usize, hi: usize| -> f64 {
        if lo > hi {
            0.0
        } else {
            mass[lo..=hi].iter().sum()
        }
    };

    let k2 = arg_extreme(1..b, |k| smooth.at(k), |v, best| v < best).expect("B >= 10");
    let k1 = arg_extreme(0..k2, |k| mass[k], |v, best| v > best).expect("k2 >= 1");
    // midpoints snapped to the lattice, halves rounded up
    let m1 = (k1 + k2).div_ceil(2);
    let m2 = (k2 + b).div_ceil(2);
    let mut report = UShapeReport {
        v1: abscissa(k1),
        v2: abscissa(k2),
        u_flag: true,
        s1: sum(k1, m1),
        s2: sum(m1 + 1, k2),
        s3: sum(k2, m2),
        s4: sum(m2 + 1, b),
        smoother_df: smooth.df,
        sign_changes: smooth.sign_changes,
        reason: None,
    };
    let reason = if report.v2 > MAX_VALLEY {
        Some(format!("valley at {} exceeds {MAX_VALLEY}", report.v2))
    } else if report.s1 < report.s2 {
        Some("not decreasing between peak and valley".to_string())
    } else if report.s3 > report.s4 {
        Some("not increasing above the valley".to_string())
    } else {
        None
    };
    if reason.is_some() {
        report.u_flag = false;
        report.reason = reason;
    }
    report
}
