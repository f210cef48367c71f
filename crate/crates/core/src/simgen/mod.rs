//! Simulated ground truth: network topologies, calibrated concentration
//! matrices, Gaussian samples and scoring of estimated networks.

mod precision;
mod topology;

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

pub use precision::{
    gen_precision, partial_correlations, GroundTruthModel, Signal, SignalSummary, MAX_ATTEMPTS, PD_MARGIN,
    SHRINK_ROUNDS, SUPPORT_TOL,
};
pub use topology::{
    degrees, gen_topology, is_graphical, DegreeHistogram, Topology, DEFAULT_POWER_LAW_EXPONENT, MAX_SEQUENCE_DRAWS,
};

use crate::data::{standardize, DataMatrix};
use crate::error::{BincoError, Result};
use crate::ggm::{Edge, EdgeSet};
use crate::resample::FrequencyTable;
use crate::rng::{derive_seed, substream, Stream};

/// Draws `n` samples from `N(0, W^-1)` for the model's concentration `W`,
/// then standardizes every column.
pub fn sample_mvn(model: &GroundTruthModel, n: usize, seed: u64) -> Result<DataMatrix> {
    let p = model.p();
    let chol_w = model
        .concentration
        .clone()
        .cholesky()
        .ok_or_else(|| BincoError::FactorizationFailure("concentration matrix is not positive definite".into()))?;
    let cov = chol_w.inverse();
    let cov = (&cov + cov.transpose()) * 0.5;
    let factor = cov
        .cholesky()
        .ok_or_else(|| BincoError::FactorizationFailure("covariance matrix is not positive definite".into()))?
        .unpack();
    let mut rng = substream(seed, 0, Stream::Sampling);
    let mut x = DMatrix::<f64>::zeros(n, p);
    let mut z = DVector::<f64>::zeros(p);
    for r in 0..n {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let row = &factor * &z;
        for c in 0..p {
            x[(r, c)] = row[c];
        }
    }
    let names = (1..=p).map(|j| format!("G{j}")).collect();
    standardize(&DataMatrix::new(x, Some(names))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalResult {
    /// `FP / max(1, TP + FP)`.
    pub fdr: f64,
    /// `TP / |E|`, zero when the truth has no edges.
    pub power: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

pub fn evaluate(selected: &EdgeSet, truth: &EdgeSet) -> EvalResult {
    let tp = selected.iter().filter(|e| truth.contains(e)).count();
    let fp = selected.len() - tp;
    let fn_ = truth.len() - tp;
    EvalResult {
        fdr: fp as f64 / (tp + fp).max(1) as f64,
        power: if truth.is_empty() {
            0.0
        } else {
            tp as f64 / truth.len() as f64
        },
        tp,
        fp,
        fn_,
    }
}

/// Best realized power of any frequency cutoff whose realized FDR is at most
/// `alpha`, over every lattice cutoff of every table. Zero if none qualifies.
pub fn ideal_power(tables: &[FrequencyTable], truth: &EdgeSet, alpha: f64) -> f64 {
    let mut best = 0.0f64;
    for table in tables {
        for k in 1..=table.resamples() {
            let eval = evaluate(&table.edges_at_least(k as u32), truth);
            if eval.fdr <= alpha {
                best = best.max(eval.power);
            }
        }
    }
    best
}

pub const EDGES_FILE: &str = "truth_edges.tsv";
pub const CONCENTRATION_FILE: &str = "concentration.txt";

impl GroundTruthModel {
    /// Writes `i  j  rho` rows (one-based) for every true edge.
    pub fn write_edges<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "i\tj\trho")?;
        for e in self.adjacency.iter() {
            writeln!(out, "{}\t{}\t{}", e.i + 1, e.j + 1, self.partial_corr[(e.i, e.j)])?;
        }
        Ok(())
    }

    /// Dense whitespace-delimited matrix, one row per line, with
    /// round-trip exact decimal values.
    pub fn write_concentration<W: Write>(&self, mut out: W) -> Result<()> {
        for r in 0..self.p() {
            let row: Vec<String> = (0..self.p())
                .map(|c| format!("{}", self.concentration[(r, c)]))
                .collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn read_concentration<R: BufRead>(reader: R, topology: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (no, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| BincoError::Parse(format!("line {}: bad number {s:?}", no + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let p = rows.len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(BincoError::Parse("concentration matrix is not square".into()));
        }
        let m = DMatrix::from_fn(p, p, |i, j| rows[i][j]);
        if (0..p).any(|i| (0..i).any(|j| m[(i, j)] != m[(j, i)])) {
            return Err(BincoError::Parse("concentration matrix is not symmetric".into()));
        }
        Self::from_concentration(m, topology)
    }

    /// Writes the edge list and the concentration matrix into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_edges(std::io::BufWriter::new(std::fs::File::create(dir.join(EDGES_FILE))?))?;
        self.write_concentration(std::io::BufWriter::new(std::fs::File::create(
            dir.join(CONCENTRATION_FILE),
        )?))?;
        Ok(())
    }

    /// Reads a model saved by [`GroundTruthModel::save`]. The edge list, if
    /// present, must agree with the support of the concentration matrix.
    pub fn load(dir: &Path) -> Result<Self> {
        let file = std::fs::File::open(dir.join(CONCENTRATION_FILE))?;
        let model = Self::read_concentration(std::io::BufReader::new(file), "loaded")?;
        let edges_path = dir.join(EDGES_FILE);
        if edges_path.exists() {
            let listed = read_edge_list(std::io::BufReader::new(std::fs::File::open(edges_path)?))?;
            if listed != model.adjacency {
                return Err(BincoError::InconsistentTables(
                    "edge list disagrees with concentration matrix".into(),
                ));
            }
        }
        Ok(model)
    }
}

/// Reads the first two columns of a headed TSV as one-based edge endpoints.
pub fn read_edge_list<R: BufRead>(reader: R) -> Result<EdgeSet> {
    let mut edges = EdgeSet::new();
    for (no, line) in reader.lines().enumerate().skip(1) {
        let line = line?;
        let fields: Vec<&str> = line.split('\t').collect();
        if line.trim().is_empty() {
            continue;
        }
        let idx = |s: Option<&&str>| -> Result<usize> {
            s.and_then(|s| s.trim().parse::<usize>().ok())
                .filter(|&v| v >= 1)
                .map(|v| v - 1)
                .ok_or_else(|| BincoError::Parse(format!("line {}: bad edge endpoint", no + 1)))
        };
        let (i, j) = (idx(fields.first())?, idx(fields.get(1))?);
        if i == j {
            return Err(BincoError::Parse(format!("line {}: self-loop", no + 1)));
        }
        edges.insert(Edge::new(i, j));
    }
    Ok(edges)
}

/// Topology redraws allowed when a network cannot carry the target signal.
pub const MAX_TOPOLOGY_DRAWS: usize = 50;

/// A complete simulation design for one ground-truth network.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ModelSpec {
    pub topology: Topology,
    pub p: usize,
    pub components: usize,
    pub signal: Signal,
}

/// Draws a topology and a calibrated concentration matrix. Networks on
/// which no positive definite calibration exists (typically those with a
/// very large hub) are redrawn; the number of rejected networks is returned
/// alongside the model.
pub fn gen_model(spec: &ModelSpec, seed: u64) -> Result<(GroundTruthModel, usize)> {
    let mut last = None;
    for draw in 0..MAX_TOPOLOGY_DRAWS {
        let topo_seed = if draw == 0 {
            seed
        } else {
            derive_seed(seed, draw as u64, Stream::Topology)
        };
        let adjacency = gen_topology(&spec.topology, spec.p, spec.components, topo_seed)?;
        match gen_precision(
            &adjacency,
            spec.p,
            spec.signal,
            spec.topology.tag(),
            derive_seed(seed, draw as u64, Stream::Precision),
        ) {
            Ok(model) => {
                if draw > 0 {
                    log::info!("calibrated on network draw {}, {draw} rejected", draw + 1);
                }
                return Ok((model, draw));
            }
            Err(e @ (BincoError::CalibrationFailure(_) | BincoError::LostEdge(_))) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or(BincoError::CalibrationFailure(MAX_TOPOLOGY_DRAWS)))
}
