use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use binco::pipeline::{run_binco, run_simulation_study, stability_on_grid, LambdaGrid, RunConfig, StudyConfig};
use binco::report::{emit_report, ReportInput};
use binco::resample::{frequency_grid, FrequencyTable, GridResult};
use binco::simgen::{gen_model, sample_mvn, DegreeHistogram, ModelSpec, Signal, Topology};
use binco::stability::max_frequencies;
use binco::{standardize, BincoError, DataMatrix, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

const RESOLVED_CONFIG: &str = "config.resolved";
const GRID_FILE: &str = "grid.json";

#[derive(Parser)]
#[command(
    name = "binco",
    version,
    about = "Network inference with estimated false discovery rate control"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Center and scale every column of a data table.
    Standardize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Compute selection frequency tables over the penalty grid.
    Frequencies(RunArgs),
    /// Full procedure: frequencies, U-shape screening, null fit, cutoff and penalty choice.
    Binco(RunArgs),
    /// Stability selection on the same frequency tables.
    Stability(RunArgs),
    /// Re-run the selection on tables saved by `frequencies` and write a report.
    Report {
        /// Directory written by `frequencies`.
        #[arg(long)]
        frequencies: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Data file whose header supplies variable names.
        #[arg(long)]
        names_from: Option<PathBuf>,
        /// Report stability selection instead.
        #[arg(long)]
        stability: bool,
    },
    /// Draw a ground-truth network and data, or run a replicated study.
    Simulate(SimArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Plain-text `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the file and before flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Comma-separated penalty list.
    #[arg(long)]
    lambdas: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// bootstrap or subsample_half.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(short = 'B', long)]
    resamples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// space, neighborhood_or or neighborhood_and.
    #[arg(long)]
    procedure: Option<String>,
    /// Perturbation floor in (0, 1] or `two-step`.
    #[arg(long)]
    l: Option<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "BINCO_WORKERS")]
    workers: Option<usize>,
}

#[derive(Args, Clone)]
struct SimArgs {
    /// power_law, hub, empty, or empirical:<degree histogram file>.
    #[arg(long, default_value = "power_law")]
    topology: String,
    #[arg(long, default_value_t = 100)]
    p: usize,
    #[arg(long, default_value_t = 1)]
    components: usize,
    /// strong, weak, very_weak, or a target mean partial correlation.
    #[arg(long, default_value = "strong")]
    signal: String,
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Run a study with this many replicates instead of drawing one data set.
    #[arg(long)]
    replicates: Option<usize>,
    /// FDR levels scored in study mode.
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1")]
    alphas: Vec<f64>,
    /// Also score stability selection in study mode.
    #[arg(long)]
    stability: bool,
    /// Output directory and seed, plus resampling settings for study mode.
    #[command(flatten)]
    run: RunArgs,
}

fn exit_code(e: &BincoError) -> u8 {
    if e.is_config() {
        2
    } else if e.is_io() || matches!(e, BincoError::Json(_)) {
        3
    } else {
        4
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Standardize { input, output } => {
            let data = standardize(&DataMatrix::read_path(&input)?)?;
            data.write_csv(std::io::BufWriter::new(fs::File::create(output)?))
        }
        Command::Frequencies(args) => cmd_frequencies(&args),
        Command::Binco(args) => cmd_binco(&args),
        Command::Stability(args) => cmd_stability(&args),
        Command::Report {
            frequencies,
            output,
            alpha,
            names_from,
            stability,
        } => cmd_report(&frequencies, &output, alpha, names_from.as_deref(), stability),
        Command::Simulate(args) => cmd_simulate(&args),
    }
}

fn run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_kv(&fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| BincoError::Parse(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    if let Some(v) = &args.input {
        cfg.input = Some(v.clone());
    }
    if let Some(v) = &args.output {
        cfg.output = Some(v.clone());
    }
    let flags = [
        ("lambdas", args.lambdas.clone()),
        ("alpha", args.alpha.map(|v| v.to_string())),
        ("scheme", args.scheme.clone()),
        ("B", args.resamples.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("procedure", args.procedure.clone()),
        ("l", args.l.clone()),
        ("workers", args.workers.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| BincoError::InvalidParameter(format!("no {what} given (flag or config key)")))
}

fn load_input(cfg: &RunConfig) -> Result<DataMatrix> {
    standardize(&DataMatrix::read_path(required(&cfg.input, "input")?)?)
}

fn write_resolved(cfg: &RunConfig, lambdas: &[f64], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(RESOLVED_CONFIG), cfg.resolved_kv(lambdas))?;
    Ok(())
}

fn table_file(index: usize) -> String {
    format!("freq_{index:03}.tsv")
}

#[derive(Serialize, Deserialize)]
struct GridIndex {
    lambdas: Vec<f64>,
    l: f64,
    union_sizes: Vec<usize>,
    names: Vec<String>,
}

fn compute_grid(cfg: &RunConfig, data: &DataMatrix) -> Result<(Vec<f64>, f64, GridResult)> {
    let l = match cfg.l {
        binco::pipeline::LStrategy::Fixed(l) => l,
        binco::pipeline::LStrategy::TwoStep => {
            return Err(BincoError::InvalidParameter(
                "the two-step floor is only available in the binco command".into(),
            ))
        }
    };
    let plan = cfg.plan(data.n())?;
    let lambdas = cfg.grid.resolve(data, &plan, cfg.procedure)?;
    let grid = frequency_grid(data, &lambdas, l, &plan, cfg.procedure, &cfg.resample_options())?;
    Ok((lambdas, l, grid))
}

fn cmd_frequencies(args: &RunArgs) -> Result<()> {
    let cfg = run_config(args)?;
    let out = required(&cfg.output, "output")?;
    let data = load_input(&cfg)?;
    let (lambdas, l, grid) = compute_grid(&cfg, &data)?;
    write_resolved(&cfg, &lambdas, out)?;
    for (i, table) in grid.tables.iter().enumerate() {
        table.save(&out.join(table_file(i)))?;
    }
    let index = GridIndex {
        lambdas,
        l,
        union_sizes: grid.union_sizes,
        names: data.names().to_vec(),
    };
    fs::write(out.join(GRID_FILE), serde_json::to_string_pretty(&index)? + "\n")?;
    Ok(())
}

fn announce(status: &str, n_edges: usize, out: &Path) {
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{status}: {n_edges} edges, report in {}", out.display());
}

fn cmd_binco(args: &RunArgs) -> Result<()> {
    let cfg = run_config(args)?;
    let out = required(&cfg.output, "output")?;
    let data = load_input(&cfg)?;
    let run = run_binco(&data, &cfg)?;
    write_resolved(&cfg, &run.lambdas, out)?;
    let summary = emit_report(&ReportInput::from_run(&run, data.names(), cfg.alpha), out)?;
    if let Some(screening) = &run.screening {
        fs::write(
            out.join("screening.json"),
            serde_json::to_string_pretty(screening)? + "\n",
        )?;
    }
    announce(summary.status, summary.n_edges, out);
    Ok(())
}

fn cmd_stability(args: &RunArgs) -> Result<()> {
    let cfg = run_config(args)?;
    let out = required(&cfg.output, "output")?;
    let data = load_input(&cfg)?;
    let (lambdas, _, grid) = compute_grid(&cfg, &data)?;
    write_resolved(&cfg, &lambdas, out)?;
    let max = max_frequencies(&grid.tables)?;
    let result = stability_on_grid(&grid, cfg.alpha)?;
    let summary = emit_report(
        &ReportInput::from_stability(&max, result.as_ref(), data.names(), cfg.alpha),
        out,
    )?;
    announce(summary.status, summary.n_edges, out);
    Ok(())
}

fn cmd_report(dir: &Path, out: &Path, alpha: f64, names_from: Option<&Path>, stability: bool) -> Result<()> {
    let index: GridIndex = serde_json::from_str(&fs::read_to_string(dir.join(GRID_FILE))?)?;
    let tables = (0..index.lambdas.len())
        .map(|i| FrequencyTable::load(&dir.join(table_file(i))))
        .collect::<Result<Vec<_>>>()?;
    let names = match names_from {
        Some(path) => DataMatrix::read_path(path)?.names().to_vec(),
        None => index.names.clone(),
    };
    let mut cfg = RunConfig {
        alpha,
        grid: LambdaGrid::List(index.lambdas.clone()),
        ..RunConfig::default()
    };
    if let Some(first) = tables.first() {
        cfg.resamples = first.resamples();
        cfg.seed = first.config.seed;
        cfg.scheme = first.config.scheme;
        cfg.procedure = first.config.procedure;
        cfg.l = binco::pipeline::LStrategy::Fixed(first.config.l);
    }
    cfg.validate()?;
    let grid = GridResult {
        tables,
        union_sizes: index.union_sizes,
    };
    write_resolved(&cfg, &index.lambdas, out)?;
    let summary = if stability {
        let max = max_frequencies(&grid.tables)?;
        let result = stability_on_grid(&grid, alpha)?;
        emit_report(&ReportInput::from_stability(&max, result.as_ref(), &names, alpha), out)?
    } else {
        let selection = binco::pipeline::select_network(&grid.tables, alpha);
        let run = binco::pipeline::BincoRun {
            lambdas: index.lambdas.clone(),
            grid,
            selection,
            screening: None,
        };
        emit_report(&ReportInput::from_run(&run, &names, alpha), out)?
    };
    announce(summary.status, summary.n_edges, out);
    Ok(())
}

fn parse_topology(text: &str) -> Result<Topology> {
    match text.split_once(':') {
        Some(("empirical", path)) => Ok(Topology::Empirical {
            histogram: DegreeHistogram::read_path(Path::new(path))?,
        }),
        _ => match text {
            "power_law" | "power-law" => Ok(Topology::power_law()),
            "hub" => Ok(Topology::Hub),
            "empty" => Ok(Topology::Empty),
            other => Err(BincoError::Parse(format!("unknown topology {other:?}"))),
        },
    }
}

fn cmd_simulate(args: &SimArgs) -> Result<()> {
    let spec = ModelSpec {
        topology: parse_topology(&args.topology)?,
        p: args.p,
        components: args.components,
        signal: args.signal.parse::<Signal>()?,
    };
    let out = required(&args.run.output, "output")?;
    let seed = args.run.seed.unwrap_or(1);
    fs::create_dir_all(out)?;
    fs::write(out.join("model.json"), serde_json::to_string_pretty(&spec)? + "\n")?;
    match args.replicates {
        None => {
            let (model, rejected) = gen_model(&spec, seed)?;
            model.save(out)?;
            let data = sample_mvn(
                &model,
                args.n,
                binco::rng::derive_seed(seed, 0, binco::rng::Stream::Sampling),
            )?;
            data.write_csv(std::io::BufWriter::new(fs::File::create(out.join("data.csv"))?))?;
            println!(
                "{} true edges, {} rejected networks, data in {}",
                model.adjacency.len(),
                rejected,
                out.join("data.csv").display()
            );
            Ok(())
        }
        Some(replicates) => {
            let run = run_config(&args.run)?;
            fs::write(out.join(RESOLVED_CONFIG), run.to_kv())?;
            let study = StudyConfig {
                model: spec,
                n: args.n,
                replicates,
                seed,
                run,
                alphas: args.alphas.clone(),
                stability: args.stability,
            };
            let result = run_simulation_study(&study)?;
            fs::write(out.join("study.json"), serde_json::to_string_pretty(&result)? + "\n")?;
            let mut tsv = String::from("method\talpha\treplicates\tno_signal\tfdr_mean\tfdr_sd\tpower_mean\tpower_sd\tideal_power_mean\tmpe_mean\n");
            for a in &result.aggregates {
                tsv.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}\n",
                    a.method,
                    a.alpha,
                    a.replicates,
                    a.no_signal,
                    a.fdr_mean,
                    a.fdr_sd,
                    a.power_mean,
                    a.power_sd,
                    a.ideal_power_mean,
                    a.mpe_mean.map_or("NA".to_string(), |m| format!("{m:.4}"))
                ));
            }
            fs::write(out.join("aggregates.tsv"), &tsv)?;
            print!("{tsv}");
            if !result.failures.is_empty() {
                eprintln!("{} replicates failed and were excluded", result.failures.len());
            }
            Ok(())
        }
    }
}
