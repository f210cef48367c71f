//! Sparse Gaussian graphical model estimation.
//!
//! Two base procedures select an edge set for a fixed penalty: the joint
//! partial-correlation regression ([`fit_space`]) and per-node lasso
//! regressions ([`fit_neighborhood`]). Both accept an optional
//! [`WeightMatrix`] that rescales the penalty of each pair to `lambda / w_ij`
//! (the randomized lasso).

mod neighborhood;
mod space;

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BincoError, Result};
use crate::rng::{substream, Stream};

pub use neighborhood::{fit_neighborhood, fit_neighborhood_gram, NeighborhoodEstimate};
pub use space::{fit_space, fit_space_gram, space_kkt_residual, space_objective, SpaceEstimate};

/// Default threshold below which a coefficient counts as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-6;

/// Unordered variable pair, stored zero-based with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
}

impl Edge {
    /// Builds the canonical pair; panics on a self-loop.
    pub fn new(a: usize, b: usize) -> Self {
        assert_ne!(a, b, "self-loop ({a}, {a})");
        if a < b {
            Edge { i: a, j: b }
        } else {
            Edge { i: b, j: a }
        }
    }
}

/// Set of selected edges over `p` variables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeSet {
    edges: BTreeSet<Edge>,
}

impl EdgeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, e: Edge) -> bool {
        self.edges.insert(e)
    }

    pub fn contains(&self, e: &Edge) -> bool {
        self.edges.contains(e)
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter()
    }

    pub fn is_subset(&self, other: &EdgeSet) -> bool {
        self.edges.is_subset(&other.edges)
    }

    pub fn union_with(&mut self, other: &EdgeSet) {
        self.edges.extend(other.edges.iter().copied());
    }

    /// Largest variable index referenced, if any.
    pub fn max_index(&self) -> Option<usize> {
        self.edges.iter().map(|e| e.j).max()
    }
}

impl FromIterator<Edge> for EdgeSet {
    fn from_iter<T: IntoIterator<Item = Edge>>(iter: T) -> Self {
        EdgeSet {
            edges: iter.into_iter().collect(),
        }
    }
}

impl<'a> IntoIterator for &'a EdgeSet {
    type Item = &'a Edge;
    type IntoIter = std::collections::btree_set::Iter<'a, Edge>;

    fn into_iter(self) -> Self::IntoIter {
        self.edges.iter()
    }
}

/// Symmetric penalty weights `w_ij` in `(l, 1]` for the randomized lasso.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    w: DMatrix<f64>,
    floor: f64,
    seed: u64,
}

impl WeightMatrix {
    /// All-ones weights, i.e. the ordinary L1 penalty.
    pub fn ones(p: usize) -> Self {
        WeightMatrix {
            w: DMatrix::from_element(p, p, 1.0),
            floor: 1.0,
            seed: 0,
        }
    }

    pub fn p(&self) -> usize {
        self.w.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }
}

/// Draws `1 / w_ij ~ Uniform[1, 1/l]` independently for every pair, mirrored
/// across the diagonal.
pub fn sample_weights(p: usize, l: f64, seed: u64) -> Result<WeightMatrix> {
    if !(l > 0.0 && l <= 1.0) {
        return Err(BincoError::InvalidPerturbationFloor(l));
    }
    if l == 1.0 {
        return Ok(WeightMatrix {
            seed,
            ..WeightMatrix::ones(p)
        });
    }
    let mut rng = substream(seed, 0, Stream::PenaltyWeights);
    let hi = 1.0 / l;
    let mut w = DMatrix::from_element(p, p, 1.0);
    for i in 0..p {
        for j in (i + 1)..p {
            let inv: f64 = rng.random_range(1.0..=hi);
            w[(i, j)] = 1.0 / inv;
            w[(j, i)] = 1.0 / inv;
        }
    }
    Ok(WeightMatrix { w, floor: l, seed })
}

/// Per-pair penalty levels `lambda / w_ij` (or `lambda` without weights).
pub(crate) fn penalty_matrix(p: usize, lambda: f64, weights: Option<&WeightMatrix>) -> Result<DMatrix<f64>> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(BincoError::InvalidParameter(format!(
            "penalty must be finite and nonnegative, got {lambda}"
        )));
    }
    match weights {
        None => Ok(DMatrix::from_element(p, p, lambda)),
        Some(w) if w.p() != p => Err(BincoError::DimensionMismatch(format!(
            "weights are {}x{}, data has {} variables",
            w.p(),
            w.p(),
            p
        ))),
        Some(w) => Ok(w.matrix().map(|wij| lambda / wij)),
    }
}

#[inline]
pub(crate) fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Pairs whose estimated partial correlation exceeds `zero_tol` in magnitude.
pub fn selected_edges(est: &SpaceEstimate, zero_tol: f64) -> EdgeSet {
    let p = est.rho.nrows();
    let mut set = EdgeSet::new();
    for i in 0..p {
        for j in (i + 1)..p {
            if est.rho[(i, j)].abs() > zero_tol {
                set.insert(Edge { i, j });
            }
        }
    }
    set
}

/// Rule for turning asymmetric neighborhood coefficients into edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    And,
    #[default]
    Or,
}

/// Iteration controls shared by both solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once the largest coefficient change in a full sweep is below this.
    pub tol: f64,
    /// Budget of coordinate sweeps (full or active-set) per inner solve.
    pub max_sweeps: usize,
    /// Number of alternations between the coefficient solve and the
    /// diagonal update in the joint regression.
    pub outer_rounds: usize,
    /// Keep the objective value after every sweep.
    pub record_objective: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-6,
            max_sweeps: 500,
            outer_rounds: 2,
            record_objective: false,
        }
    }
}
