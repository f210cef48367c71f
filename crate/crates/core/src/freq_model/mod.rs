//! Two-component mixture model for selection frequencies.

mod density;
mod fdr;
mod fit;
mod null_model;

pub use density::{range_indices, EmpiricalDensity};
pub use fdr::{estimate_fdr, estimate_true_edges, optimal_cutoff, select_lambda, LambdaCandidate, NetworkEstimate};
pub use fit::{fit_null, fit_objective, match_null_proportion, NullMixtureFit, MIN_RANGE_POINTS, MULTISTARTS};
pub use null_model::{null_masses, null_masses_at, powered_beta_binomial_pmf, PoweredBetaParams};
