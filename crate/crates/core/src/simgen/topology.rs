//! Random network topologies built from degree sequences.

use std::io::BufRead;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BincoError, Result};
use crate::ggm::{Edge, EdgeSet};
use crate::rng::{substream, Stream};

pub const DEFAULT_POWER_LAW_EXPONENT: f64 = 2.3;
/// Degree sequences drawn before giving up on a component.
pub const MAX_SEQUENCE_DRAWS: usize = 100;
const PAIRING_ATTEMPTS: usize = 20;

/// Two-column `(degree, count)` histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeHistogram {
    pub bins: Vec<(usize, usize)>,
}

impl DegreeHistogram {
    pub fn new(bins: Vec<(usize, usize)>) -> Result<Self> {
        if bins.iter().all(|&(d, c)| d == 0 || c == 0) {
            return Err(BincoError::BadParams("degree histogram has no positive degrees".into()));
        }
        Ok(DegreeHistogram { bins })
    }

    /// Reads whitespace-separated `degree count` lines; `#` starts a comment.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut bins = Vec::new();
        for (no, line) in reader.lines().enumerate() {
            let line = line?;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let fields: Vec<&str> = body
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .collect();
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| BincoError::Parse(format!("line {}: expected nonnegative integer, got {s:?}", no + 1)))
            };
            match fields.as_slice() {
                [d, c] => bins.push((parse(d)?, parse(c)?)),
                _ => return Err(BincoError::Parse(format!("line {}: expected two columns", no + 1))),
            }
        }
        Self::new(bins)
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Topology {
    PowerLaw { exponent: f64 },
    Hub,
    Empirical { histogram: DegreeHistogram },
    Empty,
}

impl Topology {
    pub fn power_law() -> Self {
        Topology::PowerLaw {
            exponent: DEFAULT_POWER_LAW_EXPONENT,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Topology::PowerLaw { .. } => "power_law",
            Topology::Hub => "hub",
            Topology::Empirical { .. } => "empirical",
            Topology::Empty => "empty",
        }
    }
}

/// Draws a network on `p` nodes split into `components` equal blocks of
/// consecutive nodes with no edges between blocks.
pub fn gen_topology(kind: &Topology, p: usize, components: usize, seed: u64) -> Result<EdgeSet> {
    if components == 0 || !p.is_multiple_of(components) {
        return Err(BincoError::BadParams(format!(
            "{p} nodes cannot be split into {components} equal components"
        )));
    }
    let size = p / components;
    if let Topology::PowerLaw { exponent } = kind {
        if !(exponent.is_finite() && *exponent > 0.0) {
            return Err(BincoError::BadParams(format!("power-law exponent {exponent}")));
        }
    }
    let mut edges = EdgeSet::new();
    if matches!(kind, Topology::Empty) {
        return Ok(edges);
    }
    if size < 2 {
        return Err(BincoError::BadParams("components need at least two nodes".into()));
    }
    if matches!(kind, Topology::Hub) && size < 26 {
        return Err(BincoError::BadParams("hub components need at least 26 nodes".into()));
    }
    for c in 0..components {
        let mut rng = substream(seed, c as u64, Stream::Topology);
        let local = component(kind, size, &mut rng)?;
        let offset = c * size;
        for e in local.iter() {
            edges.insert(Edge::new(e.i + offset, e.j + offset));
        }
    }
    Ok(edges)
}

fn component(kind: &Topology, size: usize, rng: &mut ChaCha8Rng) -> Result<EdgeSet> {
    for _ in 0..MAX_SEQUENCE_DRAWS {
        let degrees = draw_degrees(kind, size, rng)?;
        if !is_graphical(&degrees) {
            continue;
        }
        for _ in 0..PAIRING_ATTEMPTS {
            if let Some(edges) = pair_stubs(&degrees, rng) {
                return Ok(edges);
            }
        }
    }
    Err(BincoError::UngraphicalDegreeSequence(MAX_SEQUENCE_DRAWS))
}

type DegreeSampler = Box<dyn Fn(usize, &mut ChaCha8Rng) -> usize>;

fn draw_degrees(kind: &Topology, size: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let max_degree = size - 1;
    let sampler: DegreeSampler = match kind {
        Topology::PowerLaw { exponent } => {
            let weights: Vec<f64> = (1..=max_degree).map(|k| (k as f64).powf(-exponent)).collect();
            let dist = WeightedIndex::new(&weights).map_err(|e| BincoError::BadParams(e.to_string()))?;
            Box::new(move |_, rng| dist.sample(rng) + 1)
        }
        Topology::Hub => Box::new(|v, rng| {
            if v < 3 {
                rng.random_range(16..=25)
            } else {
                rng.random_range(1..=4)
            }
        }),
        Topology::Empirical { histogram } => {
            let bins: Vec<(usize, usize)> = histogram.bins.iter().copied().filter(|&(_, c)| c > 0).collect();
            let dist = WeightedIndex::new(bins.iter().map(|&(_, c)| c as f64))
                .map_err(|e| BincoError::BadParams(e.to_string()))?;
            Box::new(move |_, rng| bins[dist.sample(rng)].0.min(max_degree))
        }
        Topology::Empty => Box::new(|_, _| 0),
    };
    let mut degrees: Vec<usize> = (0..size).map(|v| sampler(v, rng)).collect();
    // an odd stub total cannot be paired: redraw single nodes from their own
    // law until the parity flips
    let mut tries = 0;
    while degrees.iter().sum::<usize>() % 2 == 1 {
        tries += 1;
        if tries > 1000 {
            return Err(BincoError::UngraphicalDegreeSequence(0));
        }
        let v = rng.random_range(0..size);
        degrees[v] = sampler(v, rng);
    }
    Ok(degrees)
}

/// Erdos-Gallai test for a simple graph with the given degrees.
pub fn is_graphical(degrees: &[usize]) -> bool {
    let mut d = degrees.to_vec();
    d.sort_unstable_by(|a, b| b.cmp(a));
    let n = d.len();
    if d.iter().sum::<usize>() % 2 == 1 || d.first().is_some_and(|&m| m >= n.max(1)) {
        return false;
    }
    let mut lhs = 0usize;
    for k in 1..=n {
        lhs += d[k - 1];
        let rhs = k * (k - 1) + d[k..].iter().map(|&x| x.min(k)).sum::<usize>();
        if lhs > rhs {
            return false;
        }
    }
    true
}

/// Configuration-model pairing that realizes `degrees` exactly. The node with
/// the most unmatched stubs is wired first; each partner stub is drawn
/// uniformly among stubs that would not create a self-loop or a repeated
/// edge. Returns `None` when the draw paints itself into a corner.
fn pair_stubs(degrees: &[usize], rng: &mut ChaCha8Rng) -> Option<EdgeSet> {
    let n = degrees.len();
    let mut left = degrees.to_vec();
    let mut edges = EdgeSet::new();
    loop {
        let (v, &dv) = left
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
        if dv == 0 {
            return Some(edges);
        }
        for _ in 0..dv {
            let candidates: Vec<usize> = (0..n)
                .filter(|&u| u != v && left[u] > 0 && !edges.contains(&Edge::new(u, v)))
                .collect();
            if candidates.is_empty() {
                return None;
            }
            let dist = WeightedIndex::new(candidates.iter().map(|&u| left[u] as f64)).ok()?;
            let u = candidates[dist.sample(rng)];
            edges.insert(Edge::new(u, v));
            left[u] -= 1;
            left[v] -= 1;
        }
    }
}

/// Degree of every node.
pub fn degrees(edges: &EdgeSet, p: usize) -> Vec<usize> {
    let mut d = vec![0; p];
    for e in edges.iter() {
        d[e.i] += 1;
        d[e.j] += 1;
    }
    d
}
