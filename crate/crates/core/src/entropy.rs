//! Search-information entropy of a graph.
//!
//! A random walker leaves `s` along one of its `k_s` edges, then at every
//! intermediate node picks one of the `k - 1` edges it did not arrive on. The
//! probability of following a particular shortest path is therefore
//! `1/k_s * prod(1/(k_j - 1))` over the interior nodes, and the search
//! information of a pair is `-log2` of that probability summed over all
//! (hop-count) shortest paths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{EdgeClass, EdgeSpec, GraphError, MultilayerGraph};

pub const DEFAULT_PAIR_BUDGET: usize = 200_000;
pub const DEFAULT_SWAP_FACTOR: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum EntropyError {
    #[error("path needs at least two nodes")]
    TooShort,
    #[error("nodes {0} and {1} are not adjacent")]
    NotAdjacent(String, String),
    #[error("interior node '{0}' has degree 1")]
    DeadEndInterior(String),
    #[error("source and target are the same node")]
    SamePair,
    #[error("'{1}' is unreachable from '{0}'")]
    Unreachable(String, String),
    #[error("unknown node '{0}'")]
    UnknownNode(String),
}

impl From<GraphError> for EntropyError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::UnknownNode(id) => EntropyError::UnknownNode(id),
            other => EntropyError::UnknownNode(other.to_string()),
        }
    }
}

/// Probability that the degree-driven walker follows `path` (node indices).
pub fn path_probability(graph: &MultilayerGraph, path: &[usize]) -> Result<f64, EntropyError> {
    if path.len() < 2 {
        return Err(EntropyError::TooShort);
    }
    for w in path.windows(2) {
        if !graph.are_adjacent(w[0], w[1]) {
            return Err(EntropyError::NotAdjacent(
                graph.node(w[0]).id.clone(),
                graph.node(w[1]).id.clone(),
            ));
        }
    }
    let mut p = 1.0 / graph.degree_of(path[0]) as f64;
    for &j in &path[1..path.len() - 1] {
        let k = graph.degree_of(j);
        if k < 2 {
            return Err(EntropyError::DeadEndInterior(graph.node(j).id.clone()));
        }
        p /= (k - 1) as f64;
    }
    Ok(p)
}

/// Probability mass of all shortest paths from one source, per target.
struct SourceMass {
    hops: Vec<u32>,
    /// Summed path probability for each reachable target (excluding the target's own factor).
    mass: Vec<f64>,
    /// Number of shortest paths, saturating.
    paths: Vec<u64>,
}

fn source_mass(graph: &MultilayerGraph, s: usize) -> SourceMass {
    let hops = graph.bfs_hops(s);
    let mut order: Vec<usize> = (0..graph.node_count()).filter(|&v| hops[v] != u32::MAX).collect();
    order.sort_by_key(|&v| (hops[v], v));
    let n = graph.node_count();
    let mut mass = vec![0.0; n];
    let mut paths = vec![0u64; n];
    // forward[v]: mass arriving at v, already multiplied by v's own continuation factor
    let mut forward = vec![0.0; n];
    let ks = graph.degree_of(s).max(1) as f64;
    mass[s] = 1.0;
    paths[s] = 1;
    forward[s] = 1.0 / ks;
    for &v in order.iter().skip(1) {
        let mut m = 0.0;
        let mut c = 0u64;
        for &(u, _) in graph.neighbors(v) {
            if hops[u] != u32::MAX && hops[u] + 1 == hops[v] {
                m += forward[u];
                c = c.saturating_add(paths[u]);
            }
        }
        mass[v] = m;
        paths[v] = c;
        let k = graph.degree_of(v);
        forward[v] = if k >= 2 { m / (k - 1) as f64 } else { 0.0 };
    }
    SourceMass { hops, mass, paths }
}

/// `-log2` of the summed walker probability over every shortest path `s -> t`.
pub fn pair_search_information(graph: &MultilayerGraph, s: usize, t: usize) -> Result<f64, EntropyError> {
    if s == t {
        return Err(EntropyError::SamePair);
    }
    let sm = source_mass(graph, s);
    if sm.hops[t] == u32::MAX {
        return Err(EntropyError::Unreachable(graph.node(s).id.clone(), graph.node(t).id.clone()));
    }
    Ok(bits(sm.mass[t]))
}

fn bits(mass: f64) -> f64 {
    // mass <= 1; clamp rounding noise so the result stays non-negative
    (-mass.log2()).max(0.0)
}

/// Pair-level sample kept for plotting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSample {
    pub source: String,
    pub target: String,
    pub hops: u32,
    pub shortest_paths: u64,
    pub bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyReport {
    pub s_avg: f64,
    pub sigma: f64,
    pub s_r: Option<f64>,
    pub delta: Option<f64>,
    pub n: usize,
    pub pairs_evaluated: usize,
    pub pairs_unreachable: usize,
    pub exact: bool,
    pub sampling_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyOptions {
    pub pair_budget: usize,
    pub seed: u64,
    /// Attempted swaps per edge for the random counterpart; `None` skips it.
    pub swap_factor: Option<usize>,
}

impl Default for EntropyOptions {
    fn default() -> Self {
        Self {
            pair_budget: DEFAULT_PAIR_BUDGET,
            seed: 0,
            swap_factor: Some(DEFAULT_SWAP_FACTOR),
        }
    }
}

/// Ordered pairs to evaluate: all of them when they fit the budget, otherwise
/// a seeded uniform sample (with replacement).
fn select_pairs(n: usize, budget: usize, seed: u64) -> (Vec<(usize, usize)>, bool) {
    let total = n.saturating_mul(n.saturating_sub(1));
    if total <= budget {
        let pairs = (0..n).flat_map(|s| (0..n).filter(move |&t| t != s).map(move |t| (s, t))).collect();
        return (pairs, true);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..budget)
        .map(|_| {
            let s = rng.gen_range(0..n);
            let mut t = rng.gen_range(0..n - 1);
            if t >= s {
                t += 1;
            }
            (s, t)
        })
        .collect();
    (pairs, false)
}

fn evaluate_pairs(graph: &MultilayerGraph, pairs: &[(usize, usize)]) -> Vec<Option<PairSample>> {
    let mut sources: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    sources.sort_unstable();
    sources.dedup();
    let masses: Vec<(usize, SourceMass)> = sources.par_iter().map(|&s| (s, source_mass(graph, s))).collect();
    let lookup = |s: usize| &masses[masses.binary_search_by_key(&s, |m| m.0).unwrap()].1;
    pairs
        .iter()
        .map(|&(s, t)| {
            let sm = lookup(s);
            (sm.hops[t] != u32::MAX).then(|| PairSample {
                source: graph.node(s).id.clone(),
                target: graph.node(t).id.clone(),
                hops: sm.hops[t],
                shortest_paths: sm.paths[t],
                bits: bits(sm.mass[t]),
            })
        })
        .collect()
}

fn mean_bits(samples: &[Option<PairSample>]) -> (f64, usize) {
    let (sum, count) = samples
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(s, c), p| (s + p.bits, c + 1));
    (if count == 0 { 0.0 } else { sum / count as f64 }, count)
}

/// Average search information over (sampled) ordered pairs, with the
/// degree-preserving random counterpart evaluated on the same pairs.
pub fn search_entropy(graph: &MultilayerGraph, opts: &EntropyOptions) -> (EntropyReport, Vec<PairSample>) {
    assert!(opts.pair_budget >= 1, "pair budget must be positive");
    let n = graph.node_count();
    let (pairs, exact) = select_pairs(n, opts.pair_budget, opts.seed);
    let samples = evaluate_pairs(graph, &pairs);
    let (s_avg, evaluated) = mean_bits(&samples);
    let log_n = if n > 1 { (n as f64).log2() } else { 0.0 };
    let s_r = match opts.swap_factor {
        Some(factor) if graph.edge_count() >= 2 => {
            let random = randomize_preserving_degrees(graph, factor, opts.seed);
            Some(mean_bits(&evaluate_pairs(&random, &pairs)).0)
        }
        _ => None,
    };
    let scale = |x: f64| if log_n > 0.0 { x / log_n } else { 0.0 };
    let report = EntropyReport {
        s_avg,
        sigma: scale(s_avg),
        s_r,
        delta: s_r.map(|r| scale(s_avg - r)),
        n,
        pairs_evaluated: evaluated,
        pairs_unreachable: pairs.len() - evaluated,
        exact,
        sampling_seed: opts.seed,
    };
    (report, samples.into_iter().flatten().collect())
}

/// Degree-preserving rewiring by double-edge swaps.
///
/// `swap_factor * |E|` swaps are attempted; swaps that would create a
/// self-loop or a parallel edge are rejected. Node layers are kept and each
/// edge gets the default class for its endpoints (crosslayer when they
/// differ).
pub fn randomize_preserving_degrees(graph: &MultilayerGraph, swap_factor: usize, seed: u64) -> MultilayerGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_ed9e);
    let mut edges: Vec<(usize, usize)> = graph.edges().iter().map(|e| (e.src, e.dst)).collect();
    let mut present: std::collections::HashSet<(usize, usize)> = edges.iter().copied().collect();
    let attempts = swap_factor * edges.len();
    if edges.len() >= 2 {
        for _ in 0..attempts {
            let i = rng.gen_range(0..edges.len());
            let mut j = rng.gen_range(0..edges.len() - 1);
            if j >= i {
                j += 1;
            }
            let (a, b) = edges[i];
            let (mut c, mut d) = edges[j];
            if rng.gen_bool(0.5) {
                std::mem::swap(&mut c, &mut d);
            }
            // (a,b),(c,d) -> (a,d),(c,b)
            if a == d || c == b {
                continue;
            }
            let e1 = (a.min(d), a.max(d));
            let e2 = (c.min(b), c.max(b));
            if e1 == e2 || present.contains(&e1) || present.contains(&e2) {
                continue;
            }
            present.remove(&edges[i]);
            present.remove(&edges[j]);
            present.insert(e1);
            present.insert(e2);
            edges[i] = e1;
            edges[j] = e2;
        }
    }
    edges.sort_unstable();
    let specs = edges
        .into_iter()
        .map(|(a, b)| {
            let (na, nb) = (graph.node(a), graph.node(b));
            let class = if na.layer == nb.layer {
                EdgeClass::default_for(na.layer)
            } else {
                EdgeClass::Crosslayer
            };
            EdgeSpec::new(na.id.clone(), nb.id.clone(), class, None)
        })
        .collect();
    MultilayerGraph::with_metric(graph.nodes().to_vec(), specs, graph.metric())
        .expect("rewired edges stay simple and valid")
}
