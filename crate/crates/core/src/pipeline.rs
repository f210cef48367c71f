//! End-to-end selection: penalty grid scan, U-shape screening, null fitting,
//! cutoff and penalty choice, the two-step choice of the perturbation floor,
//! and simulation studies with known ground truth.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;

use crate::data::DataMatrix;
use crate::error::{BincoError, Result};
use crate::freq_model::{
    estimate_fdr, estimate_true_edges, fit_null, optimal_cutoff, select_lambda, EmpiricalDensity, LambdaCandidate,
    NetworkEstimate, NullMixtureFit,
};
use crate::ggm::EdgeSet;
use crate::resample::{
    frequency_grid, lambda_max, FrequencyTable, GridResult, Procedure, ResampleOptions, ResamplePlan, Scheme,
    DEFAULT_RESAMPLES,
};
use crate::rng::{derive_seed, Stream};
use crate::simgen::{evaluate, gen_model, ideal_power, sample_mvn, EvalResult, GroundTruthModel, ModelSpec};
use crate::stability::{estimate_q, max_frequencies, stability_select, StabilityResult};
use crate::ushape::{detect_ushape, UShapeReport};

/// Perturbation floors tried by the two-step strategy.
pub const L_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Penalty grid specification.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaGrid {
    List(Vec<f64>),
    /// `min, min + step, ...` up to `max` inclusive (within rounding).
    Range {
        min: f64,
        max: f64,
        step: f64,
    },
    /// `points` values evenly spaced on `[lo, hi]` times the largest useful
    /// penalty of the full data, rescaled to the resample size.
    Relative {
        lo: f64,
        hi: f64,
        points: usize,
    },
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid::Relative {
            lo: 0.2,
            hi: 1.0,
            points: 10,
        }
    }
}

impl LambdaGrid {
    pub fn resolve(&self, data: &DataMatrix, plan: &ResamplePlan, procedure: Procedure) -> Result<Vec<f64>> {
        let values = match self {
            LambdaGrid::List(v) => v.clone(),
            LambdaGrid::Range { min, max, step } => {
                if !(*step > 0.0 && min <= max) {
                    return Err(BincoError::InvalidParameter(format!(
                        "penalty range {min}..{max} by {step}"
                    )));
                }
                let count = ((max - min) / step + 1e-9).floor() as usize + 1;
                (0..count).map(|k| min + k as f64 * step).collect()
            }
            LambdaGrid::Relative { lo, hi, points } => {
                if !(*lo > 0.0 && lo <= hi && *points >= 1) {
                    return Err(BincoError::InvalidParameter(format!(
                        "relative grid [{lo}, {hi}] with {points} points"
                    )));
                }
                // sums of squares scale with (rows - 1) on standardized data
                let top = lambda_max(data, procedure) * (plan.resample_size() as f64 - 1.0) / (data.n() as f64 - 1.0);
                if *points == 1 {
                    vec![lo * top]
                } else {
                    (0..*points)
                        .map(|k| (lo + (hi - lo) * k as f64 / (*points - 1) as f64) * top)
                        .collect()
                }
            }
        };
        validate_lambdas(&values)?;
        Ok(values)
    }
}

fn validate_lambdas(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(BincoError::InvalidParameter("empty penalty grid".into()));
    }
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(BincoError::InvalidParameter(
            "penalties must be positive and finite".into(),
        ));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BincoError::InvalidParameter(
            "penalty grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LStrategy {
    Fixed(f64),
    TwoStep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub grid: LambdaGrid,
    pub alpha: f64,
    pub scheme: Scheme,
    pub resamples: usize,
    pub seed: u64,
    pub procedure: Procedure,
    pub l: LStrategy,
    /// Worker threads for resampling; zero uses every core.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            output: None,
            grid: LambdaGrid::default(),
            alpha: 0.05,
            scheme: Scheme::Bootstrap,
            resamples: DEFAULT_RESAMPLES,
            seed: 1,
            procedure: Procedure::Space,
            l: LStrategy::Fixed(1.0),
            workers: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| BincoError::Parse(format!("{key}: cannot parse {value:?}")))
}

impl RunConfig {
    /// Sets one `key = value` option.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (key, value) = (key.trim(), value.trim());
        match key {
            "input" => self.input = Some(PathBuf::from(value)),
            "output" => self.output = Some(PathBuf::from(value)),
            "lambdas" => {
                let list = value
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_num::<f64>("lambdas", s))
                    .collect::<Result<Vec<_>>>()?;
                self.grid = LambdaGrid::List(list);
            }
            "lambda_min" | "lambda_max" | "lambda_step" => {
                let v: f64 = parse_num(key, value)?;
                let (mut min, mut max, mut step) = match self.grid {
                    LambdaGrid::Range { min, max, step } => (min, max, step),
                    _ => (f64::NAN, f64::NAN, f64::NAN),
                };
                match key {
                    "lambda_min" => min = v,
                    "lambda_max" => max = v,
                    _ => step = v,
                }
                self.grid = LambdaGrid::Range { min, max, step };
            }
            "grid_lo" | "grid_hi" | "grid_points" => {
                let (mut lo, mut hi, mut points) = match self.grid {
                    LambdaGrid::Relative { lo, hi, points } => (lo, hi, points),
                    _ => (0.2, 1.0, 10),
                };
                match key {
                    "grid_lo" => lo = parse_num(key, value)?,
                    "grid_hi" => hi = parse_num(key, value)?,
                    _ => points = parse_num(key, value)?,
                }
                self.grid = LambdaGrid::Relative { lo, hi, points };
            }
            "alpha" => self.alpha = parse_num(key, value)?,
            "scheme" => self.scheme = value.parse()?,
            "B" | "resamples" => self.resamples = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "procedure" => self.procedure = value.parse()?,
            "l" => {
                self.l = match value.to_ascii_lowercase().as_str() {
                    "two-step" | "two_step" | "twostep" => LStrategy::TwoStep,
                    v => LStrategy::Fixed(parse_num("l", v)?),
                }
            }
            "workers" => self.workers = parse_num(key, value)?,
            other => return Err(BincoError::Parse(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Parses a plain-text configuration: one `key = value` per line, `#`
    /// starts a comment, later keys override earlier ones.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (no, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| BincoError::Parse(format!("line {}: expected key = value", no + 1)))?;
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(BincoError::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.resamples < 10 {
            return Err(BincoError::InvalidParameter(format!(
                "need at least 10 resamples, got {}",
                self.resamples
            )));
        }
        if let LStrategy::Fixed(l) = self.l {
            if !(l > 0.0 && l <= 1.0) {
                return Err(BincoError::InvalidPerturbationFloor(l));
            }
        }
        match &self.grid {
            LambdaGrid::List(v) => validate_lambdas(v),
            LambdaGrid::Range { min, max, step } => {
                if !(min.is_finite() && max.is_finite() && step.is_finite()) {
                    return Err(BincoError::InvalidParameter(
                        "penalty range needs lambda_min, lambda_max and lambda_step".into(),
                    ));
                }
                Ok(())
            }
            LambdaGrid::Relative { lo, hi, points } => {
                if !(*lo > 0.0 && lo <= hi && *points >= 1) {
                    return Err(BincoError::InvalidParameter(format!(
                        "relative grid [{lo}, {hi}] with {points} points"
                    )));
                }
                Ok(())
            }
        }
    }

    /// The configuration with the penalty grid spelled out, in the same
    /// `key = value` format that [`RunConfig::from_kv`] reads.
    pub fn resolved_kv(&self, lambdas: &[f64]) -> String {
        RunConfig {
            grid: LambdaGrid::List(lambdas.to_vec()),
            ..self.clone()
        }
        .to_kv()
    }

    /// The configuration as `key = value` lines, keeping the grid in its
    /// own form.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        if let Some(p) = &self.input {
            let _ = writeln!(out, "input = {}", p.display());
        }
        if let Some(p) = &self.output {
            let _ = writeln!(out, "output = {}", p.display());
        }
        match &self.grid {
            LambdaGrid::List(lambdas) => {
                let list: Vec<String> = lambdas.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(out, "lambdas = {}", list.join(","));
            }
            LambdaGrid::Range { min, max, step } => {
                let _ = writeln!(out, "lambda_min = {min}\nlambda_max = {max}\nlambda_step = {step}");
            }
            LambdaGrid::Relative { lo, hi, points } => {
                let _ = writeln!(out, "grid_lo = {lo}\ngrid_hi = {hi}\ngrid_points = {points}");
            }
        }
        let _ = writeln!(out, "alpha = {}", self.alpha);
        let _ = writeln!(out, "scheme = {}", self.scheme);
        let _ = writeln!(out, "B = {}", self.resamples);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "procedure = {}", self.procedure);
        match self.l {
            LStrategy::Fixed(l) => {
                let _ = writeln!(out, "l = {l}");
            }
            LStrategy::TwoStep => {
                let _ = writeln!(out, "l = two-step");
            }
        }
        let _ = writeln!(out, "workers = {}", self.workers);
        out
    }

    pub fn plan(&self, n: usize) -> Result<ResamplePlan> {
        ResamplePlan::new(self.scheme, self.resamples, self.seed, n)
    }

    pub fn resample_options(&self) -> ResampleOptions {
        ResampleOptions {
            workers: self.workers,
            ..ResampleOptions::default()
        }
    }
}

/// Everything learned about one penalty.
#[derive(Debug, Clone, Serialize)]
pub struct LambdaDiagnostics {
    pub lambda: f64,
    pub l: f64,
    pub support_size: usize,
    pub mean_selection_size: f64,
    pub nonconverged: usize,
    pub ushape: UShapeReport,
    pub fit: Option<NullMixtureFit>,
    /// Lattice index of `c*`.
    pub cutoff: Option<usize>,
    pub c_star: Option<f64>,
    pub fdr_hat: Option<f64>,
    pub n_selected: usize,
    pub n_true_hat: f64,
    pub qualifies: bool,
    /// Why the penalty does not qualify.
    pub reason: Option<String>,
}

impl LambdaDiagnostics {
    fn candidate(&self) -> LambdaCandidate {
        LambdaCandidate {
            lambda: self.lambda,
            l: self.l,
            cutoff: self.cutoff.filter(|_| self.qualifies),
            n_true_hat: self.n_true_hat,
            u_shaped: self.ushape.u_flag,
        }
    }
}

/// Screens one frequency table and, if it is U-shaped, fits the null and
/// finds the cutoff for `alpha`.
pub fn assess_table(table: &FrequencyTable, alpha: f64) -> LambdaDiagnostics {
    let mut diag = LambdaDiagnostics {
        lambda: table.lambda(),
        l: table.config.l,
        support_size: table.support_size(),
        mean_selection_size: table.mean_selection_size(),
        nonconverged: table.nonconverged,
        ushape: UShapeReport::default(),
        fit: None,
        cutoff: None,
        c_star: None,
        fdr_hat: None,
        n_selected: 0,
        n_true_hat: 0.0,
        qualifies: false,
        reason: None,
    };
    let density = match EmpiricalDensity::from_table(table, table.p()) {
        Ok(d) => d,
        Err(e) => {
            diag.reason = Some(e.to_string());
            return diag;
        }
    };
    diag.ushape = detect_ushape(&density);
    if !diag.ushape.u_flag {
        diag.reason = Some(format!(
            "not U-shaped: {}",
            diag.ushape.reason.as_deref().unwrap_or("shape checks failed")
        ));
        return diag;
    }
    let fit = match fit_null(&density, diag.ushape.v1, diag.ushape.v2) {
        Ok(f) => f,
        Err(e) => {
            diag.reason = Some(format!("null fit failed: {e}"));
            return diag;
        }
    };
    match optimal_cutoff(&density, &fit, alpha) {
        Some(k) => {
            let fdr = estimate_fdr(&density, &fit, k).expect("cutoff has a nonempty tail");
            let selected = density.tail_count(k);
            diag.cutoff = Some(k);
            diag.c_star = Some(density.abscissa(k));
            diag.fdr_hat = Some(fdr);
            diag.n_selected = selected;
            diag.n_true_hat = estimate_true_edges(selected, fdr);
            diag.qualifies = true;
        }
        None => diag.reason = Some(format!("no cutoff reaches estimated FDR <= {alpha}")),
    }
    diag.fit = Some(fit);
    diag
}

/// Outcome of the selection over one set of tables.
#[derive(Debug, Clone)]
pub struct Selection {
    pub diagnostics: Vec<LambdaDiagnostics>,
    pub winner: Option<usize>,
    pub estimate: Option<NetworkEstimate>,
}

/// Picks the penalty with the most estimated true edges among qualifying
/// tables and thresholds its frequencies at `c*`.
pub fn select_network(tables: &[FrequencyTable], alpha: f64) -> Selection {
    let diagnostics: Vec<LambdaDiagnostics> = tables.iter().map(|t| assess_table(t, alpha)).collect();
    let candidates: Vec<LambdaCandidate> = diagnostics.iter().map(LambdaDiagnostics::candidate).collect();
    let winner = select_lambda(&candidates);
    let estimate = winner.map(|w| network_estimate(&tables[w], &diagnostics[w], alpha));
    Selection {
        diagnostics,
        winner,
        estimate,
    }
}

fn network_estimate(table: &FrequencyTable, diag: &LambdaDiagnostics, alpha: f64) -> NetworkEstimate {
    let cutoff = diag.cutoff.expect("winning penalty has a cutoff");
    let fdr_hat = diag.fdr_hat.expect("winning penalty has an FDR estimate");
    assert!(diag.ushape.u_flag, "winning penalty must be U-shaped");
    assert!(fdr_hat <= alpha, "winning penalty must meet the FDR target");
    NetworkEstimate {
        edges: table.edges_at_least(cutoff as u32),
        c_star: cutoff as f64 / table.resamples() as f64,
        cutoff,
        lambda_star: table.lambda(),
        l_star: table.config.l,
        fdr_hat,
        n_true_hat: diag.n_true_hat,
        alpha,
        fit: diag.fit.clone().expect("winning penalty has a null fit"),
    }
}

/// A complete run: the tables behind the final choice, their diagnostics,
/// and the estimate if any penalty qualified.
#[derive(Debug, Clone)]
pub struct BincoRun {
    pub lambdas: Vec<f64>,
    pub grid: GridResult,
    pub selection: Selection,
    /// Diagnostics of the unperturbed screening pass in two-step mode.
    pub screening: Option<Vec<LambdaDiagnostics>>,
}

impl BincoRun {
    pub fn estimate(&self) -> Option<&NetworkEstimate> {
        self.selection.estimate.as_ref()
    }

    pub fn winning_table(&self) -> Option<&FrequencyTable> {
        self.selection.winner.map(|w| &self.grid.tables[w])
    }
}

/// Runs the full procedure on standardized data.
pub fn run_binco(data: &DataMatrix, cfg: &RunConfig) -> Result<BincoRun> {
    cfg.validate()?;
    let plan = cfg.plan(data.n())?;
    let lambdas = cfg.grid.resolve(data, &plan, cfg.procedure)?;
    match cfg.l {
        LStrategy::Fixed(l) => {
            let grid = frequency_grid(data, &lambdas, l, &plan, cfg.procedure, &cfg.resample_options())?;
            let selection = select_network(&grid.tables, cfg.alpha);
            Ok(BincoRun {
                lambdas,
                grid,
                selection,
                screening: None,
            })
        }
        LStrategy::TwoStep => two_step_l(data, cfg, &lambdas, &plan),
    }
}

/// Penalty that keeps the average regularization `lambda_bar` when the
/// inverse weights are uniform on `[1, 1/l]`.
pub fn matched_lambda(lambda_bar: f64, l: f64) -> f64 {
    2.0 * lambda_bar / (1.0 + 1.0 / l)
}

/// Frequency grids of the two-step strategy. None of them depends on the
/// FDR level, so one set serves every level.
#[derive(Debug, Clone, Default)]
pub struct TwoStepGrids {
    pub screening: Option<GridResult>,
    /// Perturbed grids keyed by position in [`L_GRID`], with their penalties.
    pub perturbed: BTreeMap<usize, (Vec<f64>, GridResult)>,
}

/// Screens the grid without perturbation, then tries each floor in
/// [`L_GRID`] on the matched penalties of the U-shaped grid points. The
/// smallest floor with a qualifying penalty wins (ties go to the larger
/// penalty); otherwise the unperturbed choice stands.
pub fn two_step_l(data: &DataMatrix, cfg: &RunConfig, lambdas: &[f64], plan: &ResamplePlan) -> Result<BincoRun> {
    two_step_cached(data, cfg, lambdas, plan, &mut TwoStepGrids::default())
}

/// [`two_step_l`] reusing and extending previously computed grids.
pub fn two_step_cached(
    data: &DataMatrix,
    cfg: &RunConfig,
    lambdas: &[f64],
    plan: &ResamplePlan,
    cache: &mut TwoStepGrids,
) -> Result<BincoRun> {
    let opts = cfg.resample_options();
    if cache.screening.is_none() {
        cache.screening = Some(frequency_grid(data, lambdas, 1.0, plan, cfg.procedure, &opts)?);
    }
    let grid = cache.screening.clone().expect("screening grid computed above");
    let screening = select_network(&grid.tables, cfg.alpha);
    let shaped: Vec<f64> = screening
        .diagnostics
        .iter()
        .filter(|d| d.ushape.u_flag)
        .map(|d| d.lambda)
        .collect();
    let screening_diags = screening.diagnostics.clone();
    for (idx, &l) in L_GRID.iter().enumerate() {
        if shaped.is_empty() {
            break;
        }
        if let Entry::Vacant(slot) = cache.perturbed.entry(idx) {
            let matched: Vec<f64> = shaped.iter().map(|&lb| matched_lambda(lb, l)).collect();
            let perturbed = frequency_grid(data, &matched, l, plan, cfg.procedure, &opts)?;
            slot.insert((matched, perturbed));
        }
        let (matched, perturbed) = &cache.perturbed[&idx];
        let diagnostics: Vec<LambdaDiagnostics> = perturbed.tables.iter().map(|t| assess_table(t, cfg.alpha)).collect();
        if let Some(w) = diagnostics.iter().rposition(|d| d.qualifies) {
            log::info!("two-step: floor l={l} qualifies at lambda={}", matched[w]);
            let estimate = Some(network_estimate(&perturbed.tables[w], &diagnostics[w], cfg.alpha));
            return Ok(BincoRun {
                lambdas: matched.clone(),
                grid: perturbed.clone(),
                selection: Selection {
                    diagnostics,
                    winner: Some(w),
                    estimate,
                },
                screening: Some(screening_diags),
            });
        }
    }
    log::info!("two-step: no perturbed penalty qualifies, keeping l=1");
    Ok(BincoRun {
        lambdas: lambdas.to_vec(),
        grid,
        selection: screening,
        screening: Some(screening_diags),
    })
}

/// Replicated simulation design.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub model: ModelSpec,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Resampling and grid settings; its seed is replaced per replicate.
    pub run: RunConfig,
    pub alphas: Vec<f64>,
    pub stability: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub method: &'static str,
    pub alpha: f64,
    pub status: &'static str,
    pub fdr: f64,
    pub power: f64,
    pub ideal_power: f64,
    /// Power relative to the ideal power; absent when the ideal is zero.
    pub mpe: Option<f64>,
    pub n_selected: usize,
    pub n_true: usize,
    pub lambda_star: Option<f64>,
    pub l_star: Option<f64>,
    pub threshold: Option<f64>,
    pub rejected_networks: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub method: &'static str,
    pub alpha: f64,
    pub replicates: usize,
    pub no_signal: usize,
    pub fdr_mean: f64,
    pub fdr_sd: f64,
    pub power_mean: f64,
    pub power_sd: f64,
    pub ideal_power_mean: f64,
    pub mpe_mean: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyResult {
    pub rows: Vec<ReplicateRow>,
    pub aggregates: Vec<Aggregate>,
    /// Replicates that failed, with the reason; they are excluded above.
    pub failures: Vec<(usize, String)>,
}

/// One replicate's inputs, reproducible from the study seed alone.
pub struct Replicate {
    pub model: GroundTruthModel,
    pub data: DataMatrix,
    pub rejected_networks: usize,
    pub run_seed: u64,
}

pub fn draw_replicate(study: &StudyConfig, r: usize) -> Result<Replicate> {
    let seed = derive_seed(study.seed, r as u64, Stream::Replicate);
    let (model, rejected_networks) = gen_model(&study.model, seed)?;
    let data = sample_mvn(&model, study.n, derive_seed(seed, 0, Stream::Sampling))?;
    Ok(Replicate {
        model,
        data,
        rejected_networks,
        run_seed: derive_seed(seed, 1, Stream::Replicate),
    })
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn row(
    replicate: usize,
    method: &'static str,
    alpha: f64,
    selected: Option<&EdgeSet>,
    truth: &EdgeSet,
    ideal: f64,
) -> ReplicateRow {
    let empty = EdgeSet::new();
    let eval: EvalResult = evaluate(selected.unwrap_or(&empty), truth);
    ReplicateRow {
        replicate,
        method,
        alpha,
        status: if selected.is_some() { "ok" } else { "no_signal" },
        fdr: eval.fdr,
        power: eval.power,
        ideal_power: ideal,
        mpe: (ideal > 0.0).then(|| eval.power / ideal),
        n_selected: eval.tp + eval.fp,
        n_true: truth.len(),
        lambda_star: None,
        l_star: None,
        threshold: None,
        rejected_networks: 0,
    }
}

/// Scores one replicate at every level, sharing frequency tables across levels.
pub fn score_replicate(study: &StudyConfig, r: usize) -> Result<Vec<ReplicateRow>> {
    let rep = draw_replicate(study, r)?;
    let truth = &rep.model.adjacency;
    let mut cfg = study.run.clone();
    cfg.seed = rep.run_seed;
    let mut rows = Vec::new();
    let mut shared: Option<BincoRun> = None;
    let mut two_step = TwoStepGrids::default();
    for &alpha in &study.alphas {
        cfg.alpha = alpha;
        let run = match (&cfg.l, &shared) {
            (LStrategy::Fixed(_), Some(run)) => BincoRun {
                selection: select_network(&run.grid.tables, alpha),
                ..run.clone()
            },
            (LStrategy::Fixed(_), None) => run_binco(&rep.data, &cfg)?,
            (LStrategy::TwoStep, _) => {
                cfg.validate()?;
                let plan = cfg.plan(rep.data.n())?;
                let lambdas = cfg.grid.resolve(&rep.data, &plan, cfg.procedure)?;
                two_step_cached(&rep.data, &cfg, &lambdas, &plan, &mut two_step)?
            }
        };
        let ideal = ideal_power(&run.grid.tables, truth, alpha);
        let est = run.estimate();
        let mut b = row(r, "binco", alpha, est.map(|e| &e.edges), truth, ideal);
        b.lambda_star = est.map(|e| e.lambda_star);
        b.l_star = est.map(|e| e.l_star);
        b.threshold = est.map(|e| e.c_star);
        b.rejected_networks = rep.rejected_networks;
        rows.push(b);
        if study.stability {
            let sel = stability_on_grid(&run.grid, alpha)?;
            let mut s = row(r, "stability", alpha, sel.as_ref().map(|s| &s.edges), truth, ideal);
            s.threshold = sel.as_ref().map(|s| s.t_star);
            s.rejected_networks = rep.rejected_networks;
            rows.push(s);
        }
        if shared.is_none() {
            shared = Some(run);
        }
    }
    Ok(rows)
}

/// Stability selection on the tables and union sizes of one grid.
pub fn stability_on_grid(grid: &GridResult, alpha: f64) -> Result<Option<StabilityResult>> {
    let max = max_frequencies(&grid.tables)?;
    Ok(stability_select(&max, estimate_q(&grid.union_sizes), alpha))
}

pub fn run_simulation_study(study: &StudyConfig) -> Result<StudyResult> {
    study.run.validate()?;
    if study.alphas.is_empty() {
        return Err(BincoError::InvalidParameter("no FDR levels requested".into()));
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for r in 0..study.replicates {
        match score_replicate(study, r) {
            Ok(mut rs) => rows.append(&mut rs),
            Err(e) if e.is_io() || e.is_config() => return Err(e),
            Err(e) => {
                log::warn!("replicate {r} failed: {e}");
                failures.push((r, e.to_string()));
            }
        }
    }
    let mut aggregates = Vec::new();
    let methods: &[&'static str] = if study.stability {
        &["binco", "stability"]
    } else {
        &["binco"]
    };
    for &method in methods {
        for &alpha in &study.alphas {
            let group: Vec<&ReplicateRow> = rows.iter().filter(|r| r.method == method && r.alpha == alpha).collect();
            let fdr: Vec<f64> = group.iter().map(|r| r.fdr).collect();
            let power: Vec<f64> = group.iter().map(|r| r.power).collect();
            let ideal: Vec<f64> = group.iter().map(|r| r.ideal_power).collect();
            let mpe: Vec<f64> = group.iter().filter_map(|r| r.mpe).collect();
            let (fdr_mean, fdr_sd) = mean_sd(&fdr);
            let (power_mean, power_sd) = mean_sd(&power);
            aggregates.push(Aggregate {
                method,
                alpha,
                replicates: group.len(),
                no_signal: group.iter().filter(|r| r.status == "no_signal").count(),
                fdr_mean,
                fdr_sd,
                power_mean,
                power_sd,
                ideal_power_mean: mean_sd(&ideal).0,
                mpe_mean: (!mpe.is_empty()).then(|| mean_sd(&mpe).0),
            });
        }
    }
    Ok(StudyResult {
        rows,
        aggregates,
        failures,
    })
}
