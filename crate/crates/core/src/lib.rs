//! Sparse Gaussian graphical model inference with direct false discovery
//! rate control.
//!
//! A base edge-selection procedure is run on many resamples of the data; the
//! per-edge selection frequencies are then modeled as a two-component mixture
//! whose null part is a binomial kernel integrated against a powered beta
//! prior. The fitted null gives an FDR estimate for every frequency cutoff,
//! and the cutoff and penalty are chosen to maximize the estimated number of
//! true edges at a target FDR.

// `!(x > y)` comparisons are used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod freq_model;
pub mod ggm;
pub mod pipeline;
pub mod report;
pub mod resample;
pub mod rng;
pub mod simgen;
pub mod stability;
pub mod ushape;

pub use data::{standardize, DataMatrix};
pub use error::{BincoError, Result};
