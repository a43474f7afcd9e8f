//! Slow reference implementations used to check the library.
#![allow(dead_code)]

use ctmap_core::geo::LatLon;
use ctmap_core::graph::{EdgeClass, EdgeSpec, Layer, MultilayerGraph, Node};
use rand::Rng;

const ROAD_CLASSES: [EdgeClass; 4] = [
    EdgeClass::RoadHighway,
    EdgeClass::RoadPrincipal,
    EdgeClass::RoadRegional,
    EdgeClass::RoadLocal,
];

/// Connected road graph: a random spanning tree plus `extra` random chords.
/// Edge lengths are explicit so costs are easy to tie.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, extra: usize) -> MultilayerGraph {
    let nodes: Vec<Node> = (0..n)
        .map(|i| {
            Node::new(
                format!("v{i:02}"),
                48.80 + rng.gen_range(0.0..0.05),
                2.30 + rng.gen_range(0.0..0.08),
                Layer::Road,
            )
        })
        .collect();
    let mut pairs: Vec<(usize, usize)> = (1..n).map(|v| (rng.gen_range(0..v), v)).collect();
    for _ in 0..extra {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b && !pairs.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a)) {
            pairs.push((a, b));
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(a, b)| {
            let class = ROAD_CLASSES[rng.gen_range(0..ROAD_CLASSES.len())];
            let len = f64::from(rng.gen_range(1..=8u32)) * 0.5;
            EdgeSpec::new(format!("v{a:02}"), format!("v{b:02}"), class, Some(len))
        })
        .collect();
    MultilayerGraph::new(nodes, edges).unwrap()
}

/// Least cost from `s` to every node, by enumerating simple paths.
pub fn least_costs(graph: &MultilayerGraph, s: usize) -> Vec<f64> {
    let mut best = vec![f64::INFINITY; graph.node_count()];
    let mut on_path = vec![false; graph.node_count()];
    fn walk(g: &MultilayerGraph, v: usize, cost: f64, on_path: &mut [bool], best: &mut [f64]) {
        best[v] = best[v].min(cost);
        on_path[v] = true;
        for e in g.edges() {
            let w = if e.src == v {
                e.dst
            } else if e.dst == v {
                e.src
            } else {
                continue;
            };
            if !on_path[w] {
                walk(g, w, cost + e.weight() * e.length_km, on_path, best);
            }
        }
        on_path[v] = false;
    }
    walk(graph, s, 0.0, &mut on_path, &mut best);
    best
}

fn degree(graph: &MultilayerGraph, v: usize) -> usize {
    graph.edges().iter().filter(|e| e.src == v || e.dst == v).count()
}

fn hop_distances(graph: &MultilayerGraph, s: usize) -> Vec<Option<usize>> {
    let mut hops = vec![None; graph.node_count()];
    hops[s] = Some(0);
    let mut frontier = vec![s];
    let mut d = 0;
    while !frontier.is_empty() {
        d += 1;
        let mut next = Vec::new();
        for &v in &frontier {
            for e in graph.edges() {
                let w = if e.src == v {
                    e.dst
                } else if e.dst == v {
                    e.src
                } else {
                    continue;
                };
                if hops[w].is_none() {
                    hops[w] = Some(d);
                    next.push(w);
                }
            }
        }
        frontier = next;
    }
    hops
}

/// Every fewest-hop path from `s` to `t`.
pub fn all_shortest_paths(graph: &MultilayerGraph, s: usize, t: usize) -> Vec<Vec<usize>> {
    let Some(len) = hop_distances(graph, s)[t] else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut path = vec![s];
    fn extend(g: &MultilayerGraph, t: usize, len: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let v = *path.last().unwrap();
        if path.len() == len + 1 {
            if v == t {
                out.push(path.clone());
            }
            return;
        }
        for e in g.edges() {
            let w = if e.src == v {
                e.dst
            } else if e.dst == v {
                e.src
            } else {
                continue;
            };
            if !path.contains(&w) {
                path.push(w);
                extend(g, t, len, path, out);
                path.pop();
            }
        }
    }
    extend(graph, t, len, &mut path, &mut out);
    out
}

/// Search information in bits from enumerated shortest paths.
pub fn search_information(graph: &MultilayerGraph, s: usize, t: usize) -> Option<f64> {
    let paths = all_shortest_paths(graph, s, t);
    if paths.is_empty() {
        return None;
    }
    let total: f64 = paths
        .iter()
        .map(|p| {
            let mut prob = 1.0 / degree(graph, p[0]) as f64;
            for &j in &p[1..p.len() - 1] {
                prob /= (degree(graph, j) - 1) as f64;
            }
            prob
        })
        .sum();
    Some(-total.log2())
}

/// Mean search information over all ordered reachable pairs.
pub fn mean_search_information(graph: &MultilayerGraph) -> f64 {
    let n = graph.node_count();
    let mut sum = 0.0;
    let mut count = 0;
    for s in 0..n {
        for t in 0..n {
            if s != t {
                if let Some(b) = search_information(graph, s, t) {
                    sum += b;
                    count += 1;
                }
            }
        }
    }
    sum / count as f64
}

/// Road nodes on a north-south line at the given offsets (km), for metric tests.
pub fn line_graph(offsets_km: &[f64]) -> MultilayerGraph {
    let km_per_deg = 6371.0 * std::f64::consts::PI / 180.0;
    let nodes = offsets_km
        .iter()
        .enumerate()
        .map(|(i, d)| Node::new(format!("p{i}"), 48.0 + d / km_per_deg, 2.0, Layer::Road))
        .collect();
    MultilayerGraph::new(nodes, Vec::new()).unwrap()
}

/// Minimum unit-cost alignment, by trying every alignment.
pub fn levenshtein(a: &[usize], b: &[usize], same: &dyn Fn(usize, usize) -> bool) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((&x, ra)), Some((&y, rb))) => {
            let sub = levenshtein(ra, rb, same) + usize::from(!same(x, y));
            let del = levenshtein(ra, b, same) + 1;
            let ins = levenshtein(a, rb, same) + 1;
            sub.min(del).min(ins)
        }
    }
}

/// Weighted alignment cost over every alignment. A gap node pays its distance
/// to the closer of the two nodes it falls between in the other sequence.
pub fn weighted_alignment(graph: &MultilayerGraph, pred: &[usize], truth: &[usize]) -> f64 {
    fn gap(g: &MultilayerGraph, node: usize, other: &[usize], pos: usize) -> f64 {
        let mut best = f64::INFINITY;
        if pos > 0 {
            best = best.min(g.distance(node, other[pos - 1]));
        }
        if pos < other.len() {
            best = best.min(g.distance(node, other[pos]));
        }
        if best.is_infinite() {
            0.0
        } else {
            best
        }
    }
    fn go(g: &MultilayerGraph, p: &[usize], t: &[usize], i: usize, j: usize) -> f64 {
        if i == p.len() && j == t.len() {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        if i < p.len() && j < t.len() {
            best = best.min(g.distance(p[i], t[j]) + go(g, p, t, i + 1, j + 1));
        }
        if i < p.len() {
            best = best.min(gap(g, p[i], t, j) + go(g, p, t, i + 1, j));
        }
        if j < t.len() {
            best = best.min(gap(g, t[j], p, i) + go(g, p, t, i, j + 1));
        }
        best
    }
    go(graph, pred, truth, 0, 0)
}

fn distinct(v: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    for &x in v {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// Matched pairs when the closest remaining ε-pair is taken repeatedly.
pub fn closest_pair_matching(graph: &MultilayerGraph, pred: &[usize], truth: &[usize], eps: f64) -> usize {
    let (mut p, mut t) = (distinct(pred), distinct(truth));
    let mut matched = 0;
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for (i, &a) in p.iter().enumerate() {
            for (j, &b) in t.iter().enumerate() {
                let d = graph.distance(a, b);
                if d <= eps && best.map_or(true, |(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        match best {
            Some((_, i, j)) => {
                p.remove(i);
                t.remove(j);
                matched += 1;
            }
            None => return matched,
        }
    }
}

/// Largest one-to-one ε-matching, by trying every assignment.
pub fn maximum_matching(graph: &MultilayerGraph, pred: &[usize], truth: &[usize], eps: f64) -> usize {
    fn go(g: &MultilayerGraph, p: &[usize], t: &mut Vec<Option<usize>>, eps: f64) -> usize {
        let Some((&a, rest)) = p.split_first() else {
            return 0;
        };
        let mut best = go(g, rest, t, eps);
        for k in 0..t.len() {
            if let Some(b) = t[k] {
                if g.distance(a, b) <= eps {
                    t[k] = None;
                    best = best.max(1 + go(g, rest, t, eps));
                    t[k] = Some(b);
                }
            }
        }
        best
    }
    let p = distinct(pred);
    let mut t: Vec<Option<usize>> = distinct(truth).into_iter().map(Some).collect();
    go(graph, &p, &mut t, eps)
}

pub fn rmse(graph: &MultilayerGraph, pred: &[usize], truth: &[usize]) -> f64 {
    if pred.is_empty() || truth.is_empty() {
        return 0.0;
    }
    let mut sq = 0.0;
    for &p in pred {
        let d = truth.iter().map(|&t| graph.distance(p, t)).fold(f64::INFINITY, f64::min);
        sq += d * d;
    }
    (sq / pred.len() as f64).sqrt()
}

/// Point `km` away from `origin` along `bearing_deg`, on a flat local patch.
pub fn offset(origin: LatLon, km: f64, bearing_deg: f64) -> LatLon {
    let km_per_deg = 6371.0 * std::f64::consts::PI / 180.0;
    let b = bearing_deg.to_radians();
    LatLon::new(
        origin.lat + km * b.cos() / km_per_deg,
        origin.lon + km * b.sin() / (km_per_deg * origin.lat.to_radians().cos()),
    )
}
