use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn binco() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_binco"));
    cmd.env_remove("BINCO_WORKERS");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    if !out.status.success() {
        eprintln!("stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn simulate(dir: &Path, topology: &str, seed: &str) {
    let out = run(binco()
        .args([
            "simulate",
            "--topology",
            topology,
            "--p",
            "20",
            "--n",
            "120",
            "--seed",
            seed,
            "--output",
        ])
        .arg(dir));
    assert_eq!(out.status.code(), Some(0));
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn simulate_then_binco_writes_the_report() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "power_law", "5");
    for file in ["data.csv", "truth_edges.tsv", "concentration.txt", "model.json"] {
        assert!(sim.join(file).exists(), "{file}");
    }
    let out_dir = tmp.path().join("run");
    let out = run(binco()
        .args(["binco", "-B", "20", "--alpha", "0.1", "--input"])
        .arg(sim.join("data.csv"))
        .arg("--output")
        .arg(&out_dir));
    assert_eq!(out.status.code(), Some(0));
    for file in [
        "edges.tsv",
        "summary.json",
        "density.tsv",
        "plot.svg",
        "diagnostics.json",
        "config.resolved",
    ] {
        assert!(out_dir.join(file).exists(), "{file}");
    }
    let resolved = read(&out_dir.join("config.resolved"));
    assert!(resolved.contains("alpha = 0.1"));
    assert!(resolved.contains("B = 20"));
    assert!(resolved.lines().any(|l| l.starts_with("lambdas = ")));
}

#[test]
fn resolved_config_reproduces_the_run_with_any_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "power_law", "8");
    let first = tmp.path().join("first");
    let out = run(binco()
        .args(["binco", "-B", "20", "--workers", "1", "--seed", "3", "--input"])
        .arg(sim.join("data.csv"))
        .arg("--output")
        .arg(&first));
    assert_eq!(out.status.code(), Some(0));
    let second = tmp.path().join("second");
    let out = run(binco()
        .env("BINCO_WORKERS", "3")
        .args(["binco", "--config"])
        .arg(first.join("config.resolved"))
        .arg("--output")
        .arg(&second));
    assert_eq!(out.status.code(), Some(0));
    assert!(read(&second.join("config.resolved")).contains("workers = 3"));
    for file in ["edges.tsv", "summary.json", "density.tsv", "diagnostics.json"] {
        assert_eq!(read(&first.join(file)), read(&second.join(file)), "{file}");
    }
}

#[test]
fn frequencies_then_report_matches_binco() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "power_law", "13");
    let data = sim.join("data.csv");
    let direct = tmp.path().join("direct");
    let freqs = tmp.path().join("freqs");
    let report = tmp.path().join("report");
    let common = ["-B", "20", "--seed", "9"];
    assert!(run(binco()
        .arg("binco")
        .args(common)
        .arg("--input")
        .arg(&data)
        .arg("--output")
        .arg(&direct))
    .status
    .success());
    assert!(run(binco()
        .arg("frequencies")
        .args(common)
        .arg("--input")
        .arg(&data)
        .arg("--output")
        .arg(&freqs))
    .status
    .success());
    assert!(
        freqs.join("grid.json").exists() && freqs.join("freq_000.tsv").exists() && freqs.join("freq_000.json").exists()
    );
    assert!(run(binco()
        .args(["report", "--alpha", "0.05", "--frequencies"])
        .arg(&freqs)
        .arg("--output")
        .arg(&report))
    .status
    .success());
    for file in ["edges.tsv", "summary.json", "density.tsv"] {
        assert_eq!(read(&direct.join(file)), read(&report.join(file)), "{file}");
    }
}

#[test]
fn stability_command_reports_its_method() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "power_law", "2");
    let out_dir = tmp.path().join("stab");
    let out = run(binco()
        .args([
            "stability",
            "-B",
            "20",
            "--scheme",
            "subsample",
            "--l",
            "0.5",
            "--input",
        ])
        .arg(sim.join("data.csv"))
        .arg("--output")
        .arg(&out_dir));
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_str(&read(&out_dir.join("summary.json"))).unwrap();
    assert_eq!(summary["method"], "stability");
}

#[test]
fn no_signal_is_a_successful_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "empty", "4");
    let out_dir = tmp.path().join("run");
    // penalties far above any useful value select nothing at all
    let out = run(binco()
        .args(["binco", "-B", "20", "--lambdas", "1e6,2e6", "--input"])
        .arg(sim.join("data.csv"))
        .arg("--output")
        .arg(&out_dir));
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("no_signal"));
    let summary: serde_json::Value = serde_json::from_str(&read(&out_dir.join("summary.json"))).unwrap();
    assert_eq!(summary["status"], "no_signal");
    assert!(read(&out_dir.join("edges.tsv")).starts_with("i\tj\tname_i"));
}

#[test]
fn exit_codes_follow_the_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");

    // configuration error
    let csv = tmp.path().join("ok.csv");
    fs::write(&csv, "a,b,c\n1,2,3\n2,1,4\n3,5,1\n4,4,4\n").unwrap();
    let out = binco()
        .args(["binco", "--alpha", "1.5", "--input"])
        .arg(&csv)
        .arg("--output")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = binco()
        .args(["binco", "--set", "bogus=1", "--input"])
        .arg(&csv)
        .arg("--output")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // missing input file
    let out = binco()
        .args(["binco", "--input"])
        .arg(tmp.path().join("missing.csv"))
        .arg("--output")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    // a constant column cannot be standardized
    let flat = tmp.path().join("flat.csv");
    fs::write(&flat, "a,b\n1,2\n1,3\n1,5\n").unwrap();
    let out = binco()
        .args(["binco", "--input"])
        .arg(&flat)
        .arg("--output")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn standardize_centers_and_scales() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("raw.tsv");
    fs::write(&input, "x\ty\n1\t10\n2\t20\n3\t60\n").unwrap();
    let output = tmp.path().join("std.csv");
    assert!(run(binco()
        .args(["standardize", "--input"])
        .arg(&input)
        .arg("--output")
        .arg(&output))
    .status
    .success());
    let text = read(&output);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    for col in 0..2 {
        let values: Vec<f64> = rows.iter().map(|r| r[col]).collect();
        let mean = values.iter().sum::<f64>() / 3.0;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    }
}

#[test]
fn study_mode_writes_aggregates() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("study");
    let out = run(binco()
        .args([
            "simulate",
            "--p",
            "20",
            "--n",
            "100",
            "--replicates",
            "2",
            "--stability",
            "-B",
            "20",
            "--set",
            "grid_points=4",
            "--output",
        ])
        .arg(&out_dir));
    assert_eq!(out.status.code(), Some(0));
    let table = read(&out_dir.join("aggregates.tsv"));
    assert_eq!(table.lines().count(), 1 + 4);
    assert!(read(&out_dir.join("config.resolved")).contains("grid_points = 4"));
    let study: serde_json::Value = serde_json::from_str(&read(&out_dir.join("study.json"))).unwrap();
    assert_eq!(study["rows"].as_array().unwrap().len(), 8);
}
