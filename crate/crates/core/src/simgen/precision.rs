//! Concentration matrices with a calibrated partial-correlation strength.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BincoError, Result};
use crate::ggm::{Edge, EdgeSet};
use crate::rng::{substream, Stream};

/// Redraws allowed when a draw is not positive definite or drops an edge.
pub const MAX_ATTEMPTS: usize = 20;
/// Smallest eigenvalue required of the unit-diagonal concentration matrix.
pub const PD_MARGIN: f64 = 0.02;
/// Partial correlations below this magnitude count as zero.
pub const SUPPORT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    Strong,
    Weak,
    VeryWeak,
    /// Explicit target mean of the nonzero `|rho|`.
    Custom(f64),
}

impl Signal {
    pub fn target_mean(&self) -> f64 {
        match self {
            Signal::Strong => 0.34,
            Signal::Weak => 0.25,
            Signal::VeryWeak => 0.21,
            Signal::Custom(m) => *m,
        }
    }
}

impl FromStr for Signal {
    type Err = BincoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "strong" => Ok(Signal::Strong),
            "weak" => Ok(Signal::Weak),
            "very_weak" | "veryweak" => Ok(Signal::VeryWeak),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|m| *m > 0.0 && *m < 1.0)
                .map(Signal::Custom)
                .ok_or_else(|| BincoError::BadParams(format!("unknown signal level {s:?}"))),
        }
    }
}

/// Realized mean and standard deviation of the nonzero `|rho|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSummary {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthModel {
    pub adjacency: EdgeSet,
    pub concentration: DMatrix<f64>,
    pub partial_corr: DMatrix<f64>,
    pub topology: String,
    pub signal: SignalSummary,
}

impl GroundTruthModel {
    pub fn p(&self) -> usize {
        self.concentration.nrows()
    }

    /// Assembles a model from a concentration matrix, deriving the partial
    /// correlations, support and signal summary.
    pub fn from_concentration(concentration: DMatrix<f64>, topology: impl Into<String>) -> Result<Self> {
        let p = concentration.nrows();
        if concentration.ncols() != p || p < 2 {
            return Err(BincoError::DimensionMismatch(
                "concentration matrix must be square with p >= 2".into(),
            ));
        }
        if (0..p).any(|i| !(concentration[(i, i)] > 0.0)) {
            return Err(BincoError::FactorizationFailure("nonpositive diagonal".into()));
        }
        let rho = partial_correlations(&concentration);
        let adjacency = support(&rho, SUPPORT_TOL);
        let signal = summarize(&rho, &adjacency);
        Ok(GroundTruthModel {
            adjacency,
            concentration,
            partial_corr: rho,
            topology: topology.into(),
            signal,
        })
    }

    /// Smallest eigenvalue of the concentration matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.concentration.clone()).eigenvalues.min()
    }
}

/// `rho_ij = -w_ij / sqrt(w_ii w_jj)` with a unit diagonal.
pub fn partial_correlations(concentration: &DMatrix<f64>) -> DMatrix<f64> {
    let p = concentration.nrows();
    DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            -concentration[(i, j)] / (concentration[(i, i)] * concentration[(j, j)]).sqrt()
        }
    })
}

fn support(rho: &DMatrix<f64>, tol: f64) -> EdgeSet {
    let p = rho.nrows();
    let mut s = EdgeSet::new();
    for i in 0..p {
        for j in (i + 1)..p {
            if rho[(i, j)].abs() > tol {
                s.insert(Edge::new(i, j));
            }
        }
    }
    s
}

fn summarize(rho: &DMatrix<f64>, adjacency: &EdgeSet) -> SignalSummary {
    let vals: Vec<f64> = adjacency.iter().map(|e| rho[(e.i, e.j)].abs()).collect();
    if vals.is_empty() {
        return SignalSummary { mean: 0.0, sd: 0.0 };
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    SignalSummary { mean, sd: var.sqrt() }
}

/// Shrink rounds per draw before giving up on it.
pub const SHRINK_ROUNDS: usize = 100;

/// Builds a unit-diagonal concentration matrix on `adjacency` whose nonzero
/// partial correlations have mean magnitude equal to the signal target.
///
/// Each edge gets a magnitude drawn from `U[0.5, 1]` with a random sign and
/// one global scale then hits the target mean exactly. While the smallest
/// eigenvalue sits below [`PD_MARGIN`], edges carrying the weight of the offending eigenvector are shrunk and the
/// global scale is recomputed, which moves magnitude away from hubs. A draw
/// that still fails is replaced by a fresh one.
pub fn gen_precision(
    adjacency: &EdgeSet,
    p: usize,
    signal: Signal,
    topology: &str,
    seed: u64,
) -> Result<GroundTruthModel> {
    if adjacency.max_index().is_some_and(|m| m >= p) {
        return Err(BincoError::DimensionMismatch(format!(
            "adjacency refers to nodes beyond {p}"
        )));
    }
    let target = signal.target_mean();
    if !(target > 0.0 && target < 1.0) {
        return Err(BincoError::BadParams(format!("target mean {target}")));
    }
    if adjacency.is_empty() {
        return GroundTruthModel::from_concentration(DMatrix::identity(p, p), topology);
    }
    let edges: Vec<Edge> = adjacency.iter().copied().collect();
    let blocks = connected_blocks(&edges, p);
    let mut lost_edges = 0;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = substream(seed, attempt as u64, Stream::Precision);
        let signs: Vec<f64> = edges
            .iter()
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let mut mags: Vec<f64> = edges.iter().map(|_| rng.random_range(0.5..=1.0)).collect();
        let Some(scale) = shrink_until_definite(&edges, &signs, &mut mags, &blocks, target) else {
            log::debug!("precision draw {attempt}: not positive definite after shrinking, redrawing");
            continue;
        };
        let mut omega = DMatrix::<f64>::identity(p, p);
        for (k, e) in edges.iter().enumerate() {
            let w = -scale * signs[k] * mags[k];
            omega[(e.i, e.j)] = w;
            omega[(e.j, e.i)] = w;
        }
        let model = GroundTruthModel::from_concentration(omega, topology)?;
        if model.adjacency != *adjacency {
            log::debug!("precision draw {attempt}: lost an edge, redrawing");
            lost_edges += 1;
            continue;
        }
        return Ok(model);
    }
    if lost_edges == MAX_ATTEMPTS {
        return Err(BincoError::LostEdge(MAX_ATTEMPTS));
    }
    Err(BincoError::CalibrationFailure(MAX_ATTEMPTS))
}

/// Node sets of the connected components with at least one edge, and for
/// every edge the index of its component.
struct Blocks {
    nodes: Vec<Vec<usize>>,
    of_edge: Vec<usize>,
}

fn connected_blocks(edges: &[Edge], p: usize) -> Blocks {
    let mut parent: Vec<usize> = (0..p).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for e in edges {
        let (a, b) = (find(&mut parent, e.i), find(&mut parent, e.j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut index = vec![usize::MAX; p];
    let mut nodes: Vec<Vec<usize>> = Vec::new();
    for e in edges {
        for v in [e.i, e.j] {
            let root = find(&mut parent, v);
            if index[root] == usize::MAX {
                index[root] = nodes.len();
                nodes.push(Vec::new());
            }
        }
    }
    for v in 0..p {
        let root = find(&mut parent, v);
        if index[root] != usize::MAX {
            nodes[index[root]].push(v);
        }
    }
    let of_edge = edges.iter().map(|e| index[find(&mut parent, e.i)]).collect();
    Blocks { nodes, of_edge }
}

/// Returns the global scale once `I - scale * R` clears the margin, shrinking
/// `mags` along the way; `None` if the round budget runs out.
fn shrink_until_definite(edges: &[Edge], signs: &[f64], mags: &mut [f64], blocks: &Blocks, target: f64) -> Option<f64> {
    for _ in 0..SHRINK_ROUNDS {
        let scale = target * mags.len() as f64 / mags.iter().sum::<f64>();
        let mut worst: Option<(usize, f64, DVector<f64>)> = None;
        for (b, nodes) in blocks.nodes.iter().enumerate() {
            let pos: std::collections::HashMap<usize, usize> = nodes.iter().enumerate().map(|(k, &v)| (v, k)).collect();
            let mut r = DMatrix::<f64>::zeros(nodes.len(), nodes.len());
            for (k, e) in edges.iter().enumerate().filter(|(k, _)| blocks.of_edge[*k] == b) {
                let (i, j) = (pos[&e.i], pos[&e.j]);
                r[(i, j)] = scale * signs[k] * mags[k];
                r[(j, i)] = r[(i, j)];
            }
            let eig = SymmetricEigen::new(r);
            let (top, lmax) =
                eig.eigenvalues.iter().enumerate().fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc },
                );
            if 1.0 - lmax < PD_MARGIN && worst.as_ref().is_none_or(|w| lmax > w.1) {
                worst = Some((b, lmax, eig.eigenvectors.column(top).into_owned()));
            }
        }
        let Some((b, _, v)) = worst else {
            return Some(scale);
        };
        let nodes = &blocks.nodes[b];
        let pos: std::collections::HashMap<usize, usize> = nodes.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        let loads: Vec<(usize, f64)> = edges
            .iter()
            .enumerate()
            .filter(|(k, _)| blocks.of_edge[*k] == b)
            .map(|(k, e)| (k, (v[pos[&e.i]] * v[pos[&e.j]]).abs()))
            .collect();
        let top = loads.iter().fold(0.0f64, |m, &(_, l)| m.max(l));
        if !(top > 0.0) {
            return None;
        }
        for (k, load) in loads {
            mags[k] *= 1.0 - 0.3 * load / top;
        }
    }
    None
}
