//! End-to-end acceptance checks. Run with `cargo test --test acceptance`.
//!
//! Every criterion prints one `PASS` or `FAIL` line with the measured values;
//! the process exits non-zero if any criterion fails. Tolerances are the
//! constants at the top of each check and are never adjusted at run time.

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use binco::freq_model::{fit_null, null_masses, powered_beta_binomial_pmf, EmpiricalDensity, PoweredBetaParams};
use binco::ggm::{fit_neighborhood_gram, fit_space, SolverOptions};
use binco::pipeline::{
    draw_replicate, run_binco, run_simulation_study, LStrategy, RunConfig, StudyConfig, StudyResult,
};
use binco::report::{emit_report, ReportInput, EDGES_FILE, SUMMARY_FILE};
use binco::resample::Scheme;
use binco::simgen::{ModelSpec, Signal, Topology};
use binco::stability::fdr_proxy_bound;
use binco::DataMatrix;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution};
use statrs::function::beta::ln_beta;
use statrs::function::factorial::ln_binomial;

const SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn desk_study(topology: Topology, replicates: usize, run: RunConfig, alphas: Vec<f64>, stability: bool) -> StudyConfig {
    StudyConfig {
        model: ModelSpec {
            topology,
            p: 100,
            components: 1,
            signal: Signal::Strong,
        },
        n: 200,
        replicates,
        seed: SEED,
        run,
        alphas,
        stability,
    }
}

/// Bootstrap resampling with the data-driven perturbation floor.
fn control_run() -> RunConfig {
    RunConfig {
        resamples: 50,
        scheme: Scheme::Bootstrap,
        l: LStrategy::TwoStep,
        ..RunConfig::default()
    }
}

fn control_study() -> StudyConfig {
    desk_study(Topology::power_law(), 10, control_run(), vec![0.05, 0.1], false)
}

fn fdr_control(study: &StudyResult) -> Outcome {
    let mut pass = study.failures.is_empty();
    let mut parts = Vec::new();
    for alpha in [0.05, 0.1] {
        let bound = 2.0 * alpha;
        let fdrs: Vec<f64> = study
            .rows
            .iter()
            .filter(|r| r.method == "binco" && r.alpha == alpha)
            .map(|r| r.fdr)
            .collect();
        let mean = fdrs.iter().sum::<f64>() / fdrs.len().max(1) as f64;
        let within = fdrs.iter().filter(|&&f| f <= bound).count();
        pass &= fdrs.len() == 10 && mean <= bound && mean >= 0.0 && within >= 8;
        let listed: Vec<String> = fdrs.iter().map(|f| format!("{f:.3}")).collect();
        parts.push(format!(
            "alpha {alpha}: mean FDR {mean:.4} (bound {bound}), {within}/10 within bound [{}]",
            listed.join(" ")
        ));
    }
    if !study.failures.is_empty() {
        parts.push(format!("{} replicates failed", study.failures.len()));
    }
    outcome(pass, parts.join("; "))
}

fn efficiency(study: &StudyResult) -> Outcome {
    let rows: Vec<_> = study
        .rows
        .iter()
        .filter(|r| r.method == "binco" && r.alpha == 0.05)
        .collect();
    let n = rows.len().max(1) as f64;
    let power = rows.iter().map(|r| r.power).sum::<f64>() / n;
    let ideal = rows.iter().map(|r| r.ideal_power).sum::<f64>() / n;
    outcome(
        !rows.is_empty() && power >= 0.80 * ideal,
        format!(
            "mean power {power:.4}, mean ideal power {ideal:.4}, ratio {:.4} (need >= 0.80)",
            power / ideal
        ),
    )
}

fn empty_network_gate() -> Outcome {
    let study = desk_study(Topology::Empty, 10, control_run(), vec![0.05], false);
    match run_simulation_study(&study) {
        Ok(result) => {
            let no_signal = result.rows.iter().filter(|r| r.status == "no_signal").count();
            let selected: Vec<String> = result.rows.iter().map(|r| r.n_selected.to_string()).collect();
            outcome(
                result.failures.is_empty() && no_signal >= 9,
                format!(
                    "{no_signal}/10 replicates returned no signal (need >= 9); edges selected [{}]",
                    selected.join(" ")
                ),
            )
        }
        Err(e) => outcome(false, format!("study failed: {e}")),
    }
}

fn stability_comparison() -> Outcome {
    let run = RunConfig {
        resamples: 50,
        scheme: Scheme::SubsampleHalf,
        l: LStrategy::Fixed(0.5),
        ..RunConfig::default()
    };
    let study = desk_study(Topology::power_law(), 5, run, vec![0.05], true);
    let result = match run_simulation_study(&study) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("study failed: {e}")),
    };
    let mut good = 0;
    let mut parts = Vec::new();
    for r in 0..5 {
        let find = |method: &str| {
            result
                .rows
                .iter()
                .find(|row| row.replicate == r && row.method == method)
        };
        let (Some(b), Some(s)) = (find("binco"), find("stability")) else {
            parts.push(format!("#{r} missing"));
            continue;
        };
        let ok = s.fdr <= 0.05 && s.power < b.power;
        good += ok as usize;
        parts.push(format!(
            "#{r} stability fdr {:.3} power {:.3} vs binco power {:.3}",
            s.fdr, s.power, b.power
        ));
    }
    outcome(
        good >= 4,
        format!("{good}/5 replicates qualify (need >= 4); {}", parts.join(", ")),
    )
}

fn beta_binomial(k: usize, trials: usize, a: f64, b: f64) -> f64 {
    (ln_binomial(trials as u64, k as u64) + ln_beta(k as f64 + a, (trials - k) as f64 + b) - ln_beta(a, b)).exp()
}

fn pmf_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_closed = 0.0f64;
    for _ in 0..20 {
        let a = rng.random_range(0.2..20.0);
        let b = rng.random_range(0.2..20.0);
        let trials = rng.random_range(5..=120usize);
        let params = PoweredBetaParams::new(a, b, 1.0).unwrap();
        for k in 0..=trials {
            let got = powered_beta_binomial_pmf(k, trials, &params).unwrap();
            worst_closed = worst_closed.max((got - beta_binomial(k, trials, a, b)).abs());
        }
    }

    // the standard error is that of the Monte Carlo frequency under the exact pmf
    let draws = 1_000_000usize;
    let trials = 20usize;
    let mut worst_z = 0.0f64;
    let mut misses = 0;
    for _ in 0..5 {
        let a = rng.random_range(0.3..6.0);
        let b = rng.random_range(0.3..6.0);
        let gamma = rng.random_range(0.3..3.0);
        let params = PoweredBetaParams::new(a, b, gamma).unwrap();
        let q = Beta::new(a, b).unwrap();
        let mut counts = vec![0usize; trials + 1];
        for _ in 0..draws {
            let t = q.sample(&mut rng).powf(gamma).clamp(0.0, 1.0);
            counts[Binomial::new(trials as u64, t).unwrap().sample(&mut rng) as usize] += 1;
        }
        for (k, &c) in counts.iter().enumerate() {
            let exact = powered_beta_binomial_pmf(k, trials, &params).unwrap();
            let se = (exact * (1.0 - exact) / draws as f64).sqrt();
            let z = (c as f64 / draws as f64 - exact).abs() / se;
            worst_z = worst_z.max(z);
            misses += (z > 3.0) as usize;
        }
    }
    outcome(
        worst_closed <= 1e-10 && misses == 0,
        format!(
            "closed form max error {worst_closed:.2e} (tol 1e-10); Monte Carlo worst {worst_z:.2} SE, {misses} of {} points beyond 3 SE",
            5 * (trials + 1)
        ),
    )
}

fn tight() -> SolverOptions {
    SolverOptions {
        tol: 1e-12,
        max_sweeps: 20_000,
        ..SolverOptions::default()
    }
}

/// Largest violation of the subgradient conditions of the joint regression,
/// with the gradient of the squared residuals computed from the raw data.
fn space_kkt_from_data(data: &DataMatrix, rho: &DMatrix<f64>, sigma: &[f64], lambda: f64) -> f64 {
    let (n, p) = (data.n(), data.p());
    let y = data.values();
    let mut res = DMatrix::zeros(n, p);
    for i in 0..p {
        for r in 0..n {
            let mut fit = 0.0;
            for j in 0..p {
                if j != i {
                    fit += (sigma[j] / sigma[i]).sqrt() * rho[(i, j)] * y[(r, j)];
                }
            }
            res[(r, i)] = y[(r, i)] - fit;
        }
    }
    let mut worst = 0.0f64;
    for i in 0..p {
        for j in (i + 1)..p {
            let (sij, sji) = ((sigma[j] / sigma[i]).sqrt(), (sigma[i] / sigma[j]).sqrt());
            let g: f64 = (0..n)
                .map(|r| -res[(r, i)] * sij * y[(r, j)] - res[(r, j)] * sji * y[(r, i)])
                .sum();
            let v = rho[(i, j)];
            let viol = if v != 0.0 {
                (g + lambda * v.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            };
            worst = worst.max(viol);
        }
    }
    worst
}

/// Lasso of one node on the other two, found by trying every sign pattern
/// and keeping the one whose stationarity and sign conditions hold.
fn lasso2_by_enumeration(g: &DMatrix<f64>, target: usize, lam: f64) -> [f64; 3] {
    let others: Vec<usize> = (0..3).filter(|&k| k != target).collect();
    let (a, b) = (others[0], others[1]);
    let xty = [g[(a, target)], g[(b, target)]];
    let xtx = [[g[(a, a)], g[(a, b)]], [g[(b, a)], g[(b, b)]]];
    let mut found = None;
    for sa in [-1i32, 0, 1] {
        for sb in [-1i32, 0, 1] {
            let s = [sa, sb];
            let mut beta = [0.0; 2];
            match (sa != 0, sb != 0) {
                (false, false) => {}
                (true, false) => beta[0] = (xty[0] - lam * sa as f64) / xtx[0][0],
                (false, true) => beta[1] = (xty[1] - lam * sb as f64) / xtx[1][1],
                (true, true) => {
                    let rhs = [xty[0] - lam * sa as f64, xty[1] - lam * sb as f64];
                    let det = xtx[0][0] * xtx[1][1] - xtx[0][1] * xtx[1][0];
                    beta[0] = (rhs[0] * xtx[1][1] - rhs[1] * xtx[0][1]) / det;
                    beta[1] = (rhs[1] * xtx[0][0] - rhs[0] * xtx[1][0]) / det;
                }
            }
            let ok = (0..2).all(|k| {
                let grad = xty[k] - xtx[k][0] * beta[0] - xtx[k][1] * beta[1];
                if s[k] == 0 {
                    grad.abs() <= lam
                } else {
                    beta[k] != 0.0 && beta[k].signum() as i32 == s[k]
                }
            });
            if ok {
                found = Some(beta);
            }
        }
    }
    let beta = found.expect("some sign pattern satisfies the conditions");
    let mut out = [0.0; 3];
    out[a] = beta[0];
    out[b] = beta[1];
    out
}

fn solver_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_kkt = 0.0f64;
    for inst in 0..50u64 {
        let p = rng.random_range(3..=20usize);
        let n = rng.random_range(30..=100usize);
        let frac = rng.random_range(0.1..=0.9);
        let data = common::random_data(n, p, 10_000 + inst);
        let lambda = frac * common::space_lambda_max(&data);
        let est = fit_space(&data, lambda, None, &tight()).unwrap();
        worst_kkt = worst_kkt.max(space_kkt_from_data(&data, &est.rho, &est.sigma_diag, lambda));
    }

    let mut mismatches = 0;
    for inst in 0..50u64 {
        let n = rng.random_range(20..=100usize);
        let frac = rng.random_range(0.1..=0.9);
        let data = common::random_data(n, 3, 20_000 + inst);
        let g = data.gram();
        let lmax = (0..3)
            .flat_map(|i| (0..3).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| g[(i, j)].abs())
            .fold(0.0, f64::max);
        let lam = frac * lmax;
        let est = fit_neighborhood_gram(&g, lam, None, &tight()).unwrap();
        let agrees = (0..3).all(|i| {
            let want = lasso2_by_enumeration(&g, i, lam);
            (0..3).all(|j| (est.beta[(i, j)] != 0.0) == (want[j] != 0.0))
        });
        mismatches += (!agrees) as usize;
    }
    outcome(
        worst_kkt < 1e-6 && mismatches == 0,
        format!("joint regression worst KKT residual {worst_kkt:.2e} (tol 1e-6); neighborhood support mismatches {mismatches}/50"),
    )
}

fn mixture_self_consistency() -> Outcome {
    const TRIALS: usize = 50;
    // signal sits on the top lattice points, outside the fitting range
    const SIGNAL_FROM: usize = 46;
    let (v1, v2) = (0.0, 0.8);
    let tail_from = 45; // 45 / 50 = 0.9
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_pi = 0.0f64;
    let mut worst_tail = 0.0f64;
    let mut failed = 0;
    let mut fits = 0;
    for _ in 0..10 {
        let a = rng.random_range(0.3..2.0);
        let b = rng.random_range(1.0..10.0);
        let gamma = rng.random_range(0.5..2.0);
        let h = null_masses(TRIALS, &PoweredBetaParams::new(a, b, gamma).unwrap()).unwrap();
        for pi in [0.0, 0.02, 0.05] {
            let mut mass: Vec<f64> = h.iter().map(|v| (1.0 - pi) * v).collect();
            for m in mass.iter_mut().skip(SIGNAL_FROM) {
                *m += pi / (TRIALS + 1 - SIGNAL_FROM) as f64;
            }
            let density = EmpiricalDensity::from_mass(mass, 124_750).unwrap();
            fits += 1;
            let Ok(fit) = fit_null(&density, v1, v2) else {
                failed += 1;
                continue;
            };
            let true_tail: f64 = (1.0 - pi) * h[tail_from..].iter().sum::<f64>();
            let fit_tail: f64 = (1.0 - fit.pi_hat) * fit.null_mass[tail_from..].iter().sum::<f64>();
            let pi_err = (fit.pi_hat - pi).abs();
            let tail_err = (fit_tail - true_tail).abs() / true_tail;
            worst_pi = worst_pi.max(pi_err);
            worst_tail = worst_tail.max(tail_err);
            if pi_err > 0.02 || tail_err > 0.30 {
                failed += 1;
            }
        }
    }
    outcome(
        failed == 0,
        format!(
            "{failed}/{fits} fits out of tolerance; worst |pi error| {worst_pi:.2e} (tol 0.02), worst tail relative error {worst_tail:.2e} (tol 0.30)"
        ),
    )
}

fn proxy_arithmetic() -> Outcome {
    // q^2 / ((2t - 1) N) worked by hand
    let cases = [
        (
            50.0,
            0.9,
            124_750usize,
            10usize,
            0.025_050_100_200_400_801,
            0.002_505_010_020_040_08,
        ),
        (40.0, 0.75, 4_950, 20, 0.646_464_646_464_646_5, 0.032_323_232_323_232_32),
        (10.0, 0.6, 1_000, 1, 0.5, 0.5),
    ];
    let mut worst = 0.0f64;
    for (q, t, n_omega, size, bound, proxy) in cases {
        let got = fdr_proxy_bound(q, t, n_omega, size).unwrap();
        worst = worst
            .max((got.expected_false - bound).abs())
            .max((got.proxy - proxy).abs());
    }
    outcome(
        worst <= 1e-12,
        format!(
            "worst deviation {worst:.2e} over {} hand-worked cases (tol 1e-12)",
            cases.len()
        ),
    )
}

fn determinism() -> Outcome {
    let study = control_study();
    let rep = match draw_replicate(&study, 0) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("replicate failed: {e}")),
    };
    let names = rep.data.names().to_vec();
    let mut outputs = Vec::new();
    for workers in [1usize, 4] {
        let cfg = RunConfig {
            seed: rep.run_seed,
            alpha: 0.05,
            workers,
            ..control_run()
        };
        let dir = tempfile::tempdir().unwrap();
        let written = run_binco(&rep.data, &cfg)
            .and_then(|run| emit_report(&ReportInput::from_run(&run, &names, 0.05), dir.path()));
        if let Err(e) = written {
            return outcome(false, format!("run with {workers} workers failed: {e}"));
        }
        let read = |f: &str| fs::read(dir.path().join(f)).unwrap();
        outputs.push((read(EDGES_FILE), read(SUMMARY_FILE)));
    }
    let same_edges = outputs[0].0 == outputs[1].0;
    let same_summary = outputs[0].1 == outputs[1].1;
    outcome(
        same_edges && same_summary,
        format!(
            "{EDGES_FILE} identical: {same_edges}, {SUMMARY_FILE} identical: {same_summary} ({} and {} bytes)",
            outputs[0].0.len(),
            outputs[0].1.len()
        ),
    )
}

fn report(id: usize, name: &str, start: Instant, result: Outcome) -> bool {
    println!(
        "[{}] criterion {id} {name}: {} ({:.1}s)",
        if result.pass { "PASS" } else { "FAIL" },
        result.detail,
        start.elapsed().as_secs_f64()
    );
    result.pass
}

fn main() -> ExitCode {
    let total = Instant::now();
    let mut all = true;

    let t = Instant::now();
    let study = run_simulation_study(&control_study());
    let elapsed = t.elapsed();
    match &study {
        Ok(s) => {
            for row in s.rows.iter() {
                eprintln!(
                    "  replicate {} alpha {}: fdr {:.3} power {:.3} ideal {:.3} lambda {:?} l {:?} cutoff {:?}",
                    row.replicate,
                    row.alpha,
                    row.fdr,
                    row.power,
                    row.ideal_power,
                    row.lambda_star,
                    row.l_star,
                    row.threshold
                );
            }
            all &= report(1, "FDR control", t, fdr_control(s));
            println!("    (shared study took {:.1}s)", elapsed.as_secs_f64());
            all &= report(2, "BINCO efficiency", Instant::now(), efficiency(s));
        }
        Err(e) => {
            all &= report(1, "FDR control", t, outcome(false, format!("study failed: {e}")));
            all &= report(2, "BINCO efficiency", t, outcome(false, "no study"));
        }
    }

    type Check = (usize, &'static str, fn() -> Outcome);
    let checks: [Check; 7] = [
        (3, "empty-network gate", empty_network_gate),
        (4, "stability comparison", stability_comparison),
        (5, "null pmf oracles", pmf_oracles),
        (6, "solver oracles", solver_oracles),
        (7, "mixture self-consistency", mixture_self_consistency),
        (8, "proxy bound arithmetic", proxy_arithmetic),
        (9, "determinism across worker counts", determinism),
    ];
    for (id, name, check) in checks {
        let t = Instant::now();
        all &= report(id, name, t, check());
    }

    println!("acceptance finished in {:.1}s", total.elapsed().as_secs_f64());
    if all {
        println!("all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("some criteria failed");
        ExitCode::FAILURE
    }
}
