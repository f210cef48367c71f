use std::collections::BTreeMap;

use binco::ggm::{Edge, EdgeSet};
use binco::resample::{FrequencyTable, Procedure, Scheme, TableConfig};
use binco::simgen::*;
use binco::BincoError;
use nalgebra::DMatrix;

#[test]
fn empty_topology_has_no_edges() {
    for p in [2, 10, 100] {
        assert!(gen_topology(&Topology::Empty, p, 1, 3).unwrap().is_empty());
    }
}

fn assert_within_components(edges: &EdgeSet, size: usize) {
    for e in edges.iter() {
        assert_eq!(e.i / size, e.j / size, "edge ({}, {}) crosses components", e.i, e.j);
    }
}

#[test]
fn power_law_edge_counts() {
    for seed in 0..8 {
        let e = gen_topology(&Topology::power_law(), 500, 5, seed).unwrap();
        assert!((400..=600).contains(&e.len()), "seed {seed}: {} edges", e.len());
        assert_within_components(&e, 100);
        assert!(degrees(&e, 500).iter().all(|&d| (1..=99).contains(&d)));
    }
}

#[test]
fn hub_structure() {
    for seed in 0..5 {
        let e = gen_topology(&Topology::Hub, 500, 5, seed).unwrap();
        assert_within_components(&e, 100);
        let d = degrees(&e, 500);
        assert_eq!(d.iter().filter(|&&x| x > 15).count(), 15);
        for c in 0..5 {
            let block = &d[c * 100..(c + 1) * 100];
            assert!(block[..3].iter().all(|&x| (16..=25).contains(&x)));
            assert!(block[3..].iter().all(|&x| (1..=4).contains(&x)));
        }
        // the expected count under these degree laws is 5 * (3 * 20.5 + 97 * 2.5) / 2 = 760
        assert!((700..=820).contains(&e.len()), "seed {seed}: {} edges", e.len());
    }
}

#[test]
fn empirical_topology_uses_histogram_support() {
    let hist = DegreeHistogram::read("# degree count\n1 50\n2 30\n6 5\n".as_bytes()).unwrap();
    let e = gen_topology(&Topology::Empirical { histogram: hist }, 60, 2, 11).unwrap();
    assert_within_components(&e, 30);
    let d = degrees(&e, 60);
    assert!(d.iter().all(|x| [1, 2, 6].contains(x)), "{d:?}");
    assert!(DegreeHistogram::read("1 2 3\n".as_bytes()).is_err());
    assert!(DegreeHistogram::read("0 5\n".as_bytes()).is_err());
}

#[test]
fn topology_is_deterministic_and_validated() {
    let a = gen_topology(&Topology::power_law(), 100, 2, 9).unwrap();
    assert_eq!(a, gen_topology(&Topology::power_law(), 100, 2, 9).unwrap());
    assert_ne!(a, gen_topology(&Topology::power_law(), 100, 2, 10).unwrap());
    assert!(matches!(
        gen_topology(&Topology::power_law(), 100, 3, 1),
        Err(BincoError::BadParams(_))
    ));
    assert!(matches!(
        gen_topology(&Topology::PowerLaw { exponent: -1.0 }, 100, 1, 1),
        Err(BincoError::BadParams(_))
    ));
    assert!(matches!(
        gen_topology(&Topology::Hub, 40, 2, 1),
        Err(BincoError::BadParams(_))
    ));
}

#[test]
fn single_edge_matches_direct_inversion() {
    let adj: EdgeSet = [Edge::new(0, 1)].into_iter().collect();
    let m = gen_precision(&adj, 2, Signal::Strong, "single", 5).unwrap();
    // invert the 2x2 concentration by hand; the partial correlation of two
    // variables is their plain correlation
    let (a, b, d) = (
        m.concentration[(0, 0)],
        m.concentration[(0, 1)],
        m.concentration[(1, 1)],
    );
    let det = a * d - b * b;
    let (s11, s12, s22) = (d / det, -b / det, a / det);
    let corr = s12 / (s11 * s22).sqrt();
    assert!((corr.abs() - 0.34).abs() <= 0.02);
    assert!((corr - m.partial_corr[(0, 1)]).abs() < 1e-12);
}

fn check_invariants(m: &GroundTruthModel, adj: &EdgeSet) {
    assert!(m.min_eigenvalue() > 1e-8);
    assert_eq!(&m.adjacency, adj);
    let rho = partial_correlations(&m.concentration);
    let p = m.p();
    for i in 0..p {
        for j in (i + 1)..p {
            let on = adj.contains(&Edge::new(i, j));
            assert_eq!(rho[(i, j)].abs() > SUPPORT_TOL, on);
            assert_eq!(rho[(i, j)], m.partial_corr[(i, j)]);
        }
    }
}

#[test]
fn precision_invariants_and_signal_levels() {
    for (k, signal) in [Signal::Strong, Signal::Weak, Signal::VeryWeak].into_iter().enumerate() {
        let spec = ModelSpec {
            topology: Topology::power_law(),
            p: 100,
            components: 1,
            signal,
        };
        let (m, _) = gen_model(&spec, 40 + k as u64).unwrap();
        check_invariants(&m, &m.adjacency.clone());
        assert!((m.signal.mean - signal.target_mean()).abs() <= 0.02);
    }
    let hub = gen_topology(&Topology::Hub, 100, 1, 2).unwrap();
    let m = gen_precision(&hub, 100, Signal::Weak, "hub", 2).unwrap();
    check_invariants(&m, &hub);
    let empty = gen_precision(&EdgeSet::new(), 10, Signal::Strong, "empty", 1).unwrap();
    assert_eq!(empty.concentration, DMatrix::identity(10, 10));
}

#[test]
fn strong_signal_at_full_scale() {
    let spec = ModelSpec {
        topology: Topology::power_law(),
        p: 500,
        components: 5,
        signal: Signal::Strong,
    };
    let mut sds = Vec::new();
    for seed in 0..3 {
        let (m, _) = gen_model(&spec, seed).unwrap();
        assert!((m.signal.mean - 0.34).abs() <= 0.02);
        sds.push(m.signal.sd);
    }
    for sd in &sds {
        assert!((sd - 0.13).abs() <= 0.05, "realized sd {sds:?}");
    }
}

fn sample_partial_correlations(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let cov = x.tr_mul(x) / (n - 1.0);
    partial_correlations(&cov.try_inverse().unwrap())
}

#[test]
fn sampler_recovers_partial_correlations() {
    let adj: EdgeSet = [Edge::new(0, 1), Edge::new(1, 2), Edge::new(2, 3), Edge::new(1, 4)]
        .into_iter()
        .collect();
    let m = gen_precision(&adj, 5, Signal::Strong, "custom", 3).unwrap();
    let n = 100_000;
    let x = sample_mvn(&m, n, 17).unwrap();
    let rho = sample_partial_correlations(x.values());
    let tol = 3.0 / (n as f64).sqrt();
    for i in 0..5 {
        for j in (i + 1)..5 {
            assert!((rho[(i, j)] - m.partial_corr[(i, j)]).abs() < tol, "({i},{j})");
        }
    }
    let again = sample_mvn(&m, n, 17).unwrap();
    assert_eq!(x.values(), again.values());
}

#[test]
fn independent_model_gives_null_correlations() {
    let m = gen_precision(&EdgeSet::new(), 5, Signal::Strong, "empty", 0).unwrap();
    let n = 100_000;
    let x = sample_mvn(&m, n, 4).unwrap();
    let c = x.values().tr_mul(x.values()) / (n as f64 - 1.0);
    for i in 0..5 {
        assert!((c[(i, i)] - 1.0).abs() < 1e-9);
        for j in (i + 1)..5 {
            assert!(c[(i, j)].abs() < 3.0 / (n as f64).sqrt());
        }
    }
}

fn edges(list: &[(usize, usize)]) -> EdgeSet {
    list.iter().map(|&(i, j)| Edge::new(i, j)).collect()
}

#[test]
fn evaluation_counts() {
    let truth: EdgeSet = (0..95).map(|k| Edge::new(k, k + 1)).collect();
    let r = evaluate(&truth, &truth);
    assert_eq!((r.fdr, r.power), (0.0, 1.0));
    let r = evaluate(&EdgeSet::new(), &truth);
    assert_eq!((r.fdr, r.power, r.fn_), (0.0, 0.0, 95));
    let mut plus = truth.clone();
    for k in 0..5 {
        plus.insert(Edge::new(k, k + 50));
    }
    let r = evaluate(&plus, &truth);
    assert!((r.fdr - 0.05).abs() < 1e-15);
    assert_eq!((r.power, r.tp, r.fp, r.fn_), (1.0, 95, 5, 0));
}

fn table(p: usize, b: usize, counts: &[((usize, usize), u32)]) -> FrequencyTable {
    let map: BTreeMap<Edge, u32> = counts.iter().map(|&((i, j), c)| (Edge::new(i, j), c)).collect();
    let config = TableConfig {
        lambda: 1.0,
        l: 1.0,
        scheme: Scheme::Bootstrap,
        resamples: b,
        seed: 0,
        p,
        procedure: Procedure::Space,
    };
    FrequencyTable::from_counts(map, config).unwrap()
}

#[test]
fn ideal_power_examples() {
    let truth = edges(&[(0, 1), (1, 2), (2, 3)]);
    let separated = table(
        6,
        10,
        &[((0, 1), 10), ((1, 2), 10), ((2, 3), 10), ((3, 4), 6), ((4, 5), 2)],
    );
    for alpha in [0.0, 0.05, 0.5] {
        assert_eq!(ideal_power(std::slice::from_ref(&separated), &truth, alpha), 1.0);
    }
    // a null tied with every truth at frequency one
    let tied = table(6, 10, &[((0, 1), 10), ((1, 2), 10), ((2, 3), 10), ((4, 5), 10)]);
    assert_eq!(ideal_power(std::slice::from_ref(&tied), &truth, 0.0), 0.0);
    assert_eq!(ideal_power(std::slice::from_ref(&tied), &truth, 0.25), 1.0);
    // maximized over tables
    let weak = table(6, 10, &[((0, 1), 9), ((4, 5), 9)]);
    assert_eq!(ideal_power(std::slice::from_ref(&weak), &truth, 0.1), 0.0);
    assert_eq!(ideal_power(&[weak, separated.clone()], &truth, 0.1), 1.0);
    // lowest lattice cutoff keeps the whole support
    let support: EdgeSet = separated.iter().map(|(e, _)| *e).collect();
    assert_eq!(
        evaluate(&separated.edges_at_least(1), &truth),
        evaluate(&support, &truth)
    );
}

#[test]
fn model_round_trips_through_files() {
    let spec = ModelSpec {
        topology: Topology::power_law(),
        p: 30,
        components: 1,
        signal: Signal::Weak,
    };
    let (m, _) = gen_model(&spec, 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    m.save(dir.path()).unwrap();
    let back = GroundTruthModel::load(dir.path()).unwrap();
    assert_eq!(back.concentration, m.concentration);
    assert_eq!(back.adjacency, m.adjacency);
    let listed = read_edge_list(std::io::BufReader::new(
        std::fs::File::open(dir.path().join(EDGES_FILE)).unwrap(),
    ))
    .unwrap();
    assert_eq!(listed, m.adjacency);
}

#[test]
fn signal_levels_parse() {
    assert_eq!("strong".parse::<Signal>().unwrap(), Signal::Strong);
    assert_eq!("very-weak".parse::<Signal>().unwrap(), Signal::VeryWeak);
    assert_eq!("0.3".parse::<Signal>().unwrap(), Signal::Custom(0.3));
    assert!("loud".parse::<Signal>().is_err());
}
