#![allow(dead_code)]

use std::collections::BTreeMap;

use binco::data::{standardize_values, DataMatrix};
use binco::ggm::Edge;
use binco::resample::{FrequencyTable, Procedure, Scheme, TableConfig};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Standardized data with a chain dependence of strength `coupling`.
pub fn chain_data(n: usize, p: usize, coupling: f64, seed: u64) -> DataMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = DMatrix::zeros(n, p);
    for r in 0..n {
        let mut prev = 0.0;
        for c in 0..p {
            let z: f64 = rng.sample(StandardNormal);
            let v = coupling * prev + z;
            m[(r, c)] = v;
            prev = v;
        }
    }
    standardize_values(m).unwrap()
}

/// Standardized data with random sparse linear mixing.
pub fn random_data(n: usize, p: usize, seed: u64) -> DataMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mix = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else if rng.random::<f64>() < 0.2 {
            rng.random_range(-0.8..0.8)
        } else {
            0.0
        }
    });
    standardize_values(z * mix).unwrap()
}

/// Largest absolute off-diagonal Gram entry times two: the smallest penalty
/// at which the joint regression (unit diagonal) selects nothing.
pub fn space_lambda_max(data: &DataMatrix) -> f64 {
    let g = data.gram();
    let p = data.p();
    let mut m = 0.0f64;
    for i in 0..p {
        for j in (i + 1)..p {
            m = m.max(2.0 * g[(i, j)].abs());
        }
    }
    m
}

/// Standardized independent Gaussian columns.
pub fn random_independent(n: usize, p: usize, seed: u64) -> DataMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    standardize_values(DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))).unwrap()
}

pub fn table_with(counts: BTreeMap<Edge, u32>, p: usize, resamples: usize) -> FrequencyTable {
    let config = TableConfig {
        lambda: 1.0,
        l: 1.0,
        scheme: Scheme::Bootstrap,
        resamples,
        seed: 0,
        p,
        procedure: Procedure::Space,
    };
    FrequencyTable::from_counts(counts, config).unwrap()
}

/// Null edges with geometrically decaying counts and a block of signal
/// edges near the top of the lattice.
pub fn u_shaped_table() -> FrequencyTable {
    let (p, b) = (60, 50);
    let mut pairs = (0..p).flat_map(|i| ((i + 1)..p).map(move |j| Edge::new(i, j)));
    let mut counts = BTreeMap::new();
    for t in 0..45u32 {
        counts.insert(pairs.next().unwrap(), 50 - t % 8);
    }
    for k in 1..=30u32 {
        let n = (400.0 * 0.72f64.powi(k as i32)).floor() as usize;
        for _ in 0..n {
            counts.insert(pairs.next().unwrap(), k);
        }
    }
    table_with(counts, p, b)
}
