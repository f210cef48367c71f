//! Resampling and per-edge selection frequencies.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{standardize, DataMatrix};
use crate::error::{BincoError, Result};
use crate::ggm::{
    fit_neighborhood_gram, fit_space_gram, sample_weights, selected_edges, Combine, Edge, EdgeSet, SolverOptions,
    WeightMatrix, DEFAULT_ZERO_TOL,
};
use crate::rng::{derive_seed, substream, Stream};

/// Default number of resamples.
pub const DEFAULT_RESAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `n` draws with replacement.
    Bootstrap,
    /// `floor(n / 2)` distinct rows.
    SubsampleHalf,
}

impl std::str::FromStr for Scheme {
    type Err = BincoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bootstrap" => Ok(Scheme::Bootstrap),
            "subsample" | "subsample_half" | "half" => Ok(Scheme::SubsampleHalf),
            other => Err(BincoError::Parse(format!("unknown resampling scheme '{other}'"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Bootstrap => "bootstrap",
            Scheme::SubsampleHalf => "subsample_half",
        })
    }
}

/// Base edge-selection procedure run on each resample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Procedure {
    Space,
    Neighborhood(Combine),
}

impl std::str::FromStr for Procedure {
    type Err = BincoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "space" => Ok(Procedure::Space),
            "neighborhood" | "neighborhood_or" | "nb" => Ok(Procedure::Neighborhood(Combine::Or)),
            "neighborhood_and" => Ok(Procedure::Neighborhood(Combine::And)),
            other => Err(BincoError::Parse(format!("unknown procedure '{other}'"))),
        }
    }
}

impl std::fmt::Display for Procedure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Procedure::Space => "space",
            Procedure::Neighborhood(Combine::Or) => "neighborhood_or",
            Procedure::Neighborhood(Combine::And) => "neighborhood_and",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResamplePlan {
    pub scheme: Scheme,
    pub count: usize,
    pub seed: u64,
    pub n: usize,
}

impl ResamplePlan {
    pub fn new(scheme: Scheme, count: usize, seed: u64, n: usize) -> Result<Self> {
        if count == 0 {
            return Err(BincoError::InvalidParameter("need at least one resample".into()));
        }
        if n < 4 {
            return Err(BincoError::InvalidParameter(format!(
                "sample size {n} is too small to resample"
            )));
        }
        Ok(ResamplePlan { scheme, count, seed, n })
    }

    /// Rows in each resample.
    pub fn resample_size(&self) -> usize {
        match self.scheme {
            Scheme::Bootstrap => self.n,
            Scheme::SubsampleHalf => self.n / 2,
        }
    }
}

/// Row indices (zero-based) of resample `b` in `1..=count`. Each resample has
/// its own substream so any resample can be drawn on its own.
pub fn draw_resample(plan: &ResamplePlan, b: usize) -> Result<Vec<usize>> {
    if b == 0 || b > plan.count {
        return Err(BincoError::IndexOutOfRange {
            index: b,
            count: plan.count,
        });
    }
    let mut rng = substream(plan.seed, b as u64, Stream::ResampleIndices);
    Ok(match plan.scheme {
        Scheme::Bootstrap => (0..plan.n).map(|_| rng.random_range(0..plan.n)).collect(),
        Scheme::SubsampleHalf => {
            let mut rows = index::sample(&mut rng, plan.n, plan.n / 2).into_vec();
            rows.sort_unstable();
            rows
        }
    })
}

/// Provenance of a frequency table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableConfig {
    pub lambda: f64,
    pub l: f64,
    pub scheme: Scheme,
    #[serde(rename = "B")]
    pub resamples: usize,
    pub seed: u64,
    pub p: usize,
    pub procedure: Procedure,
}

/// Selection counts per edge over `B` resamples; frequencies are `count / B`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTable {
    counts: BTreeMap<Edge, u32>,
    pub config: TableConfig,
    /// Resamples whose fit stopped at the sweep budget.
    pub nonconverged: usize,
}

impl FrequencyTable {
    /// Builds a table from raw counts, dropping zero entries.
    pub fn from_counts(counts: BTreeMap<Edge, u32>, config: TableConfig) -> Result<Self> {
        for (e, &c) in &counts {
            if e.j >= config.p {
                return Err(BincoError::DimensionMismatch(format!(
                    "edge ({}, {}) outside {} variables",
                    e.i + 1,
                    e.j + 1,
                    config.p
                )));
            }
            if c as usize > config.resamples {
                return Err(BincoError::InvalidParameter(format!(
                    "count {c} exceeds {} resamples",
                    config.resamples
                )));
            }
        }
        let counts = counts.into_iter().filter(|&(_, c)| c > 0).collect();
        Ok(FrequencyTable {
            counts,
            config,
            nonconverged: 0,
        })
    }

    pub fn resamples(&self) -> usize {
        self.config.resamples
    }

    pub fn p(&self) -> usize {
        self.config.p
    }

    pub fn lambda(&self) -> f64 {
        self.config.lambda
    }

    pub fn count(&self, e: &Edge) -> u32 {
        self.counts.get(e).copied().unwrap_or(0)
    }

    pub fn frequency(&self, e: &Edge) -> f64 {
        self.count(e) as f64 / self.resamples() as f64
    }

    /// Edges with a positive count, with their counts.
    pub fn iter(&self) -> impl Iterator<Item = (&Edge, u32)> + '_ {
        self.counts.iter().map(|(e, &c)| (e, c))
    }

    /// Number of edges selected at least once.
    pub fn support_size(&self) -> usize {
        self.counts.len()
    }

    /// Edges selected in at least `min_count` resamples.
    pub fn edges_at_least(&self, min_count: u32) -> EdgeSet {
        self.counts
            .iter()
            .filter(|&(_, &c)| c >= min_count.max(1))
            .map(|(e, _)| *e)
            .collect()
    }

    /// Mean size of the selected set across resamples.
    pub fn mean_selection_size(&self) -> f64 {
        self.counts.values().map(|&c| c as f64).sum::<f64>() / self.resamples() as f64
    }

    /// Writes `i  j  freq` rows (one-based indices) for edges with positive frequency.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "i\tj\tfreq")?;
        for (e, c) in self.iter() {
            writeln!(out, "{}\t{}\t{}", e.i + 1, e.j + 1, c as f64 / self.resamples() as f64)?;
        }
        Ok(())
    }

    /// Writes the TSV and its JSON sidecar (`<stem>.json`).
    pub fn save(&self, tsv_path: &Path) -> Result<()> {
        let file = std::fs::File::create(tsv_path)?;
        self.write_tsv(std::io::BufWriter::new(file))?;
        let sidecar = tsv_path.with_extension("json");
        std::fs::write(sidecar, serde_json::to_string_pretty(&self.config)? + "\n")?;
        Ok(())
    }

    /// Reads a table written by [`FrequencyTable::save`].
    pub fn load(tsv_path: &Path) -> Result<Self> {
        let sidecar = tsv_path.with_extension("json");
        let config: TableConfig = serde_json::from_str(&std::fs::read_to_string(sidecar)?)?;
        let file = std::io::BufReader::new(std::fs::File::open(tsv_path)?);
        Self::read_tsv(file, config)
    }

    pub fn read_tsv<R: BufRead>(reader: R, config: TableConfig) -> Result<Self> {
        let b = config.resamples as f64;
        let mut counts = BTreeMap::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 3 {
                return Err(BincoError::Parse(format!("line {}: expected i j freq", lineno + 1)));
            }
            let parse_idx = |s: &str| -> Result<usize> {
                s.parse::<usize>()
                    .ok()
                    .filter(|&v| v >= 1)
                    .ok_or_else(|| BincoError::Parse(format!("line {}: bad index '{s}'", lineno + 1)))
            };
            let (i, j) = (parse_idx(fields[0])?, parse_idx(fields[1])?);
            if i == j {
                return Err(BincoError::Parse(format!("line {}: self-loop", lineno + 1)));
            }
            let freq: f64 = fields[2]
                .parse()
                .map_err(|_| BincoError::Parse(format!("line {}: bad frequency", lineno + 1)))?;
            let k = (freq * b).round();
            if (k - freq * b).abs() > 1e-6 || !(0.0..=b).contains(&k) {
                return Err(BincoError::Parse(format!(
                    "line {}: frequency {freq} is not on the 1/{} lattice",
                    lineno + 1,
                    config.resamples
                )));
            }
            counts.insert(Edge::new(i - 1, j - 1), k as u32);
        }
        Self::from_counts(counts, config)
    }
}

/// Execution controls for resampled fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleOptions {
    /// Worker threads; 0 uses the global rayon pool.
    pub workers: usize,
    pub solver: SolverOptions,
    pub zero_tol: f64,
    /// Draw fresh penalty weights for every resample (otherwise one draw is shared).
    pub redraw_weights: bool,
}

impl Default for ResampleOptions {
    fn default() -> Self {
        ResampleOptions {
            workers: 0,
            solver: SolverOptions::default(),
            zero_tol: DEFAULT_ZERO_TOL,
            redraw_weights: true,
        }
    }
}

/// Tables for a penalty grid plus per-resample union sizes.
#[derive(Debug, Clone)]
pub struct GridResult {
    pub tables: Vec<FrequencyTable>,
    /// For each resample, the number of edges selected under at least one penalty.
    pub union_sizes: Vec<usize>,
}

struct ResampleFit {
    per_lambda: Vec<EdgeSet>,
    nonconverged: Vec<bool>,
}

/// Weights used by resample `b`.
pub fn resample_weights(p: usize, l: f64, plan: &ResamplePlan, b: usize, redraw: bool) -> Result<Option<WeightMatrix>> {
    if l == 1.0 {
        return Ok(None);
    }
    let key = if redraw { b as u64 } else { 0 };
    sample_weights(p, l, derive_seed(plan.seed, key, Stream::PenaltyWeights)).map(Some)
}

/// Edge set of one base-procedure fit on standardized data, with its
/// convergence flag.
pub fn fit_edges(
    data: &DataMatrix,
    lambda: f64,
    weights: Option<&WeightMatrix>,
    procedure: Procedure,
    opts: &ResampleOptions,
) -> Result<(EdgeSet, bool)> {
    fit_edges_gram(&data.gram(), data.n(), lambda, weights, procedure, opts)
}

fn fit_edges_gram(
    gram: &DMatrix<f64>,
    n: usize,
    lambda: f64,
    weights: Option<&WeightMatrix>,
    procedure: Procedure,
    opts: &ResampleOptions,
) -> Result<(EdgeSet, bool)> {
    match procedure {
        Procedure::Space => {
            let est = fit_space_gram(gram, n, lambda, weights, &opts.solver)?;
            Ok((selected_edges(&est, opts.zero_tol), est.converged))
        }
        Procedure::Neighborhood(rule) => {
            let est = fit_neighborhood_gram(gram, lambda, weights, &opts.solver)?;
            Ok((est.edges(rule, opts.zero_tol), est.converged))
        }
    }
}

fn fit_resample(
    data: &DataMatrix,
    lambdas: &[f64],
    l: f64,
    plan: &ResamplePlan,
    b: usize,
    procedure: Procedure,
    opts: &ResampleOptions,
) -> Result<ResampleFit> {
    let rows = draw_resample(plan, b)?;
    let sample = standardize(&data.select_rows(&rows)?)?;
    let weights = resample_weights(data.p(), l, plan, b, opts.redraw_weights)?;
    let gram = sample.gram();
    let mut per_lambda = Vec::with_capacity(lambdas.len());
    let mut nonconverged = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let (edges, ok) = fit_edges_gram(&gram, sample.n(), lambda, weights.as_ref(), procedure, opts)?;
        per_lambda.push(edges);
        nonconverged.push(!ok);
    }
    Ok(ResampleFit {
        per_lambda,
        nonconverged,
    })
}

fn run_parallel<T, F>(workers: usize, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let job = || (1..=count).into_par_iter().map(&f).collect::<Vec<_>>();
    let results = if workers == 0 {
        job()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| BincoError::InvalidParameter(format!("thread pool: {e}")))?
            .install(job)
    };
    results.into_iter().collect()
}

/// Selection frequencies for every penalty in `lambdas`. All penalties share
/// the same resamples and penalty weights.
pub fn frequency_grid(
    data: &DataMatrix,
    lambdas: &[f64],
    l: f64,
    plan: &ResamplePlan,
    procedure: Procedure,
    opts: &ResampleOptions,
) -> Result<GridResult> {
    if lambdas.is_empty() {
        return Err(BincoError::InvalidParameter("empty penalty grid".into()));
    }
    if !(l > 0.0 && l <= 1.0) {
        return Err(BincoError::InvalidPerturbationFloor(l));
    }
    if plan.n != data.n() {
        return Err(BincoError::DimensionMismatch(format!(
            "plan is for {} samples, data has {}",
            plan.n,
            data.n()
        )));
    }
    let fits = run_parallel(opts.workers, plan.count, |b| {
        fit_resample(data, lambdas, l, plan, b, procedure, opts).map_err(|e| BincoError::Resample {
            index: b,
            source: Box::new(e),
        })
    })?;

    let mut tables = Vec::with_capacity(lambdas.len());
    for (k, &lambda) in lambdas.iter().enumerate() {
        let mut counts: BTreeMap<Edge, u32> = BTreeMap::new();
        let mut nonconverged = 0;
        for fit in &fits {
            for e in &fit.per_lambda[k] {
                *counts.entry(*e).or_insert(0) += 1;
            }
            nonconverged += fit.nonconverged[k] as usize;
        }
        if nonconverged > 0 {
            log::warn!("lambda={lambda}: {nonconverged} resample fits hit the sweep budget");
        }
        let config = TableConfig {
            lambda,
            l,
            scheme: plan.scheme,
            resamples: plan.count,
            seed: plan.seed,
            p: data.p(),
            procedure,
        };
        let mut table = FrequencyTable::from_counts(counts, config)?;
        table.nonconverged = nonconverged;
        tables.push(table);
    }
    let union_sizes = fits
        .iter()
        .map(|fit| {
            let mut all = EdgeSet::new();
            for s in &fit.per_lambda {
                all.union_with(s);
            }
            all.len()
        })
        .collect();
    Ok(GridResult { tables, union_sizes })
}

/// Selection frequencies at a single penalty.
pub fn selection_frequencies(
    data: &DataMatrix,
    lambda: f64,
    l: f64,
    plan: &ResamplePlan,
    procedure: Procedure,
    opts: &ResampleOptions,
) -> Result<FrequencyTable> {
    let mut grid = frequency_grid(data, &[lambda], l, plan, procedure, opts)?;
    Ok(grid.tables.remove(0))
}

/// Largest penalty at which the base procedure can still select an edge on
/// the full standardized data (unit diagonal).
pub fn lambda_max(data: &DataMatrix, procedure: Procedure) -> f64 {
    let g = data.gram();
    let p = data.p();
    let mut m = 0.0f64;
    for i in 0..p {
        for j in (i + 1)..p {
            m = m.max(g[(i, j)].abs());
        }
    }
    match procedure {
        Procedure::Space => 2.0 * m,
        Procedure::Neighborhood(_) => m,
    }
}
