//! Output files for a finished run.
//!
//! A report directory holds `edges.tsv`, `summary.json`, `density.tsv`,
//! `plot.svg` and `diagnostics.json`. Apart from the SVG markup every file
//! is a pure function of the run, so repeated runs with the same seed give
//! byte-identical output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::freq_model::{optimal_cutoff, EmpiricalDensity, NetworkEstimate, NullMixtureFit};
use crate::ggm::EdgeSet;
use crate::pipeline::{BincoRun, LambdaDiagnostics};
use crate::resample::FrequencyTable;
use crate::stability::{MaxFrequencies, StabilityResult};

pub const EDGES_FILE: &str = "edges.tsv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const DENSITY_FILE: &str = "density.tsv";
pub const PLOT_FILE: &str = "plot.svg";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";

/// FDR levels whose cutoffs are drawn on the plot.
pub const PLOT_LEVELS: [f64; 3] = [0.05, 0.1, 0.2];

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub method: &'static str,
    pub status: &'static str,
    pub alpha: f64,
    pub p: usize,
    pub resamples: usize,
    pub n_edges: usize,
    pub lambda_star: Option<f64>,
    pub l_star: Option<f64>,
    pub c_star: Option<f64>,
    pub fdr_hat: Option<f64>,
    pub n_true_hat: Option<f64>,
    pub pi_hat: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub gamma: Option<f64>,
    /// Cutoffs at fixed fit for [`PLOT_LEVELS`].
    pub cutoffs: Vec<LevelCutoff>,
    /// Stability selection only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityResult>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LevelCutoff {
    pub alpha: f64,
    pub c: Option<f64>,
}

/// Everything needed to write one report.
pub struct ReportInput<'a> {
    pub method: &'static str,
    pub alpha: f64,
    pub names: &'a [String],
    /// Frequencies listed in `edges.tsv` and shown in the density files.
    pub table: Option<&'a FrequencyTable>,
    pub p: usize,
    pub resamples: usize,
    /// Selected edges; `None` means no signal.
    pub selected: Option<&'a EdgeSet>,
    pub estimate: Option<&'a NetworkEstimate>,
    pub diagnostics: &'a [LambdaDiagnostics],
    pub stability: Option<&'a StabilityResult>,
    /// Max-frequency counts, used instead of `table` for stability selection.
    pub max_counts: Option<&'a MaxFrequencies>,
}

impl<'a> ReportInput<'a> {
    pub fn from_run(run: &'a BincoRun, names: &'a [String], alpha: f64) -> Self {
        let table = run.winning_table();
        let first = &run.grid.tables[0];
        ReportInput {
            method: "binco",
            alpha,
            names,
            table,
            p: first.p(),
            resamples: first.resamples(),
            selected: run.estimate().map(|e| &e.edges),
            estimate: run.estimate(),
            diagnostics: &run.selection.diagnostics,
            stability: None,
            max_counts: None,
        }
    }

    pub fn from_stability(
        max: &'a MaxFrequencies,
        result: Option<&'a StabilityResult>,
        names: &'a [String],
        alpha: f64,
    ) -> Self {
        ReportInput {
            method: "stability",
            alpha,
            names,
            table: None,
            p: max.p,
            resamples: max.resamples,
            selected: result.map(|r| &r.edges),
            estimate: None,
            diagnostics: &[],
            stability: result,
            max_counts: Some(max),
        }
    }

    fn counts(&self) -> Vec<(crate::ggm::Edge, u32)> {
        if let Some(t) = self.table {
            t.iter().map(|(e, c)| (*e, c)).collect()
        } else if let Some(m) = self.max_counts {
            m.counts.iter().map(|(e, &c)| (*e, c)).collect()
        } else {
            Vec::new()
        }
    }

    fn fit(&self) -> Option<&NullMixtureFit> {
        self.estimate.map(|e| &e.fit)
    }
}

fn name(names: &[String], i: usize) -> String {
    names.get(i).cloned().unwrap_or_else(|| format!("V{}", i + 1))
}

/// Edge rows sorted by decreasing frequency, then by index.
pub fn edges_tsv(input: &ReportInput) -> String {
    let mut rows = input.counts();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut out = String::from("i\tj\tname_i\tname_j\tfreq\tpasses_cstar\n");
    for (e, c) in rows {
        let passes = input.selected.is_some_and(|s| s.contains(&e));
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            e.i + 1,
            e.j + 1,
            name(input.names, e.i),
            name(input.names, e.j),
            c as f64 / input.resamples as f64,
            passes
        );
    }
    out
}

fn density_of(input: &ReportInput) -> Option<EmpiricalDensity> {
    let table = input.table?;
    EmpiricalDensity::from_table(table, table.p()).ok()
}

fn level_cutoffs(density: Option<&EmpiricalDensity>, fit: Option<&NullMixtureFit>) -> Vec<LevelCutoff> {
    PLOT_LEVELS
        .iter()
        .map(|&alpha| LevelCutoff {
            alpha,
            c: match (density, fit) {
                (Some(d), Some(f)) => optimal_cutoff(d, f, alpha).map(|k| d.abscissa(k)),
                _ => None,
            },
        })
        .collect()
}

pub fn summary(input: &ReportInput) -> Summary {
    let density = density_of(input);
    let fit = input.fit();
    let est = input.estimate;
    Summary {
        method: input.method,
        status: if input.selected.is_some() { "ok" } else { "no_signal" },
        alpha: input.alpha,
        p: input.p,
        resamples: input.resamples,
        n_edges: input.selected.map_or(0, |s| s.len()),
        lambda_star: est.map(|e| e.lambda_star),
        l_star: est.map(|e| e.l_star),
        c_star: est.map(|e| e.c_star).or(input.stability.map(|s| s.t_star)),
        fdr_hat: est.map(|e| e.fdr_hat),
        n_true_hat: est.map(|e| e.n_true_hat),
        pi_hat: fit.map(|f| f.pi_hat),
        a: fit.map(|f| f.params.a),
        b: fit.map(|f| f.params.b),
        gamma: fit.map(|f| f.params.gamma),
        cutoffs: level_cutoffs(density.as_ref(), fit),
        stability: input.stability.cloned(),
    }
}

/// Lattice rows `k  x  f_hat  null_scaled`; the last column is empty without a fit.
pub fn density_tsv(input: &ReportInput) -> String {
    let mut out = String::from("k\tx\tf_hat\tnull_scaled\n");
    let Some(density) = density_of(input) else {
        return out;
    };
    let null = input.fit().map(|f| f.scaled_null());
    for (k, f) in density.mass().iter().enumerate() {
        let h = null.as_ref().map(|n| n[k].to_string()).unwrap_or_default();
        let _ = writeln!(out, "{k}\t{}\t{f}\t{h}", density.abscissa(k));
    }
    out
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

/// Histogram of the frequencies on `(0, 1]` with the fitted null overlaid
/// and one vertical line per cutoff level. `x = 0` is left out because it
/// dwarfs everything else.
pub fn plot_svg(input: &ReportInput) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let title = format!("{} selection frequencies", input.method);
    let _ = writeln!(svg, r#"<text x="{MARGIN}" y="20">{title}</text>"#);
    let Some(density) = density_of(input) else {
        let _ = writeln!(
            svg,
            r#"<text x="{MARGIN}" y="{}">no frequency table to show</text>"#,
            HEIGHT / 2.0
        );
        svg.push_str("</svg>\n");
        return svg;
    };
    let b = density.resamples();
    let null = input.fit().map(|f| f.scaled_null());
    let top = (1..=b)
        .map(|k| density.mass()[k].max(null.as_ref().map_or(0.0, |n| n[k])))
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let sx = |x: f64| MARGIN + x * plot_w;
    let sy = |y: f64| HEIGHT - MARGIN - y / top * plot_h;
    let bar = plot_w / b as f64;

    let _ = writeln!(
        svg,
        r##"<line x1="{MARGIN}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="#000"/>"##,
        y0 = HEIGHT - MARGIN,
        x1 = WIDTH - MARGIN
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{y0}" stroke="#000"/>"##,
        y0 = HEIGHT - MARGIN
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{tick}</text>"#,
            sx(tick),
            HEIGHT - MARGIN + 16.0
        );
    }
    for k in 1..=b {
        let f = density.mass()[k];
        if f <= 0.0 {
            continue;
        }
        let x = density.abscissa(k);
        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="#3182bd" stroke-width="0.5"/>"##,
            sx(x) - bar / 2.0,
            sy(f),
            bar,
            HEIGHT - MARGIN - sy(f)
        );
    }
    if let Some(null) = &null {
        let points: Vec<String> = (1..=b)
            .map(|k| format!("{:.2},{:.2}", sx(density.abscissa(k)), sy(null[k])))
            .collect();
        let _ = writeln!(
            svg,
            r##"<polyline points="{}" fill="none" stroke="#de2d26" stroke-width="1.5"/>"##,
            points.join(" ")
        );
    }
    let cutoffs = level_cutoffs(Some(&density), input.fit());
    for (idx, lc) in cutoffs.iter().enumerate() {
        if let Some(c) = lc.c {
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{MARGIN}" x2="{x:.2}" y2="{y0}" stroke="#31a354" stroke-dasharray="4 3"/>"##,
                x = sx(c),
                y0 = HEIGHT - MARGIN
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">C{}={c}</text>"#,
                sx(c) - 3.0,
                MARGIN + 14.0 * (idx as f64 + 1.0),
                idx + 1
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes all report files into `out_dir`, creating it if needed.
pub fn emit_report(input: &ReportInput, out_dir: &Path) -> Result<Summary> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(EDGES_FILE), edges_tsv(input))?;
    let summary = summary(input);
    fs::write(
        out_dir.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    fs::write(out_dir.join(DENSITY_FILE), density_tsv(input))?;
    fs::write(out_dir.join(PLOT_FILE), plot_svg(input))?;
    fs::write(
        out_dir.join(DIAGNOSTICS_FILE),
        serde_json::to_string_pretty(input.diagnostics)? + "\n",
    )?;
    Ok(summary)
}
