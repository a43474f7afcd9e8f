//! HMM map-matching of sparse cellular trajectories.
//!
//! Phase one decodes a skeleton (one graph node per observation) with a
//! log-domain Viterbi pass over per-observation candidate nodes. Phase two
//! joins consecutive skeleton nodes with least travel-time paths.
//!
//! Scores are unnormalised: emission is proportional to a distance decay and
//! transitions are inverse path costs. Only the argmax is meaningful.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cellnet::{CellTower, CellularNetwork};
use crate::geo::DistanceMetric;
use crate::graph::{GraphError, MultilayerGraph, Node};

/// Emission assigned to the fallback candidate when nothing lies within tau.
pub const FALLBACK_EMISSION: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("unknown tower '{0}'")]
    UnknownTower(String),
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error("invalid trajectory '{id}': {reason}")]
    InvalidTrajectory { id: String, reason: String },
    #[error("every candidate has zero likelihood at observation {step}; consider a larger tau")]
    ZeroLikelihood { step: usize },
    #[error("no path between skeleton nodes '{from}' and '{to}'")]
    Unreachable { from: String, to: String },
    #[error("search space of {size} sequences exceeds the budget of {budget}")]
    SearchSpaceTooLarge { size: u128, budget: u128 },
}

impl From<GraphError> for MapError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::UnknownNode(id) => MapError::UnknownNode(id),
            other => MapError::UnknownNode(other.to_string()),
        }
    }
}

/// How the cost of staying on the same node is defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelfCostMode {
    /// Half of the cheapest incident edge cost.
    HalfMinEdge,
    /// A fixed cost in hours.
    FixedEpsilon,
}

impl FromStr for SelfCostMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "half-min-edge" => Ok(SelfCostMode::HalfMinEdge),
            "fixed-epsilon" => Ok(SelfCostMode::FixedEpsilon),
            other => Err(format!("unknown self cost mode '{other}' (half-min-edge|fixed-epsilon)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapperParams {
    /// Maximum antenna reach (km).
    pub tau_km: f64,
    /// Emission decay exponent.
    pub beta: f64,
    /// Candidate nodes kept per observation.
    pub max_candidates: usize,
    pub self_cost_mode: SelfCostMode,
    /// Self cost in hours for `FixedEpsilon`, and for isolated nodes.
    pub self_cost_epsilon_h: f64,
    pub crosslayer_radius_km: f64,
    pub distance: DistanceMetric,
}

impl Default for MapperParams {
    fn default() -> Self {
        Self {
            tau_km: 5.0,
            beta: 2.0,
            max_candidates: 30,
            self_cost_mode: SelfCostMode::HalfMinEdge,
            self_cost_epsilon_h: 1e-3,
            crosslayer_radius_km: 0.2,
            distance: DistanceMetric::Haversine,
        }
    }
}

impl MapperParams {
    pub const KEYS: [&'static str; 7] = [
        "tau",
        "beta",
        "k",
        "self_cost_mode",
        "self_cost_epsilon_h",
        "crosslayer_radius_km",
        "distance",
    ];

    /// Applies a `key=value` override. Returns `Ok(false)` for keys it does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, String> {
        let num = |v: &str| v.parse::<f64>().map_err(|e| format!("{key}: {e}"));
        let mut next = *self;
        match key {
            "tau" | "tau_km" => next.tau_km = num(value)?,
            "beta" => next.beta = num(value)?,
            "k" | "max_candidates" => next.max_candidates = value.parse().map_err(|e| format!("{key}: {e}"))?,
            "self_cost_mode" => next.self_cost_mode = value.parse()?,
            "self_cost_epsilon_h" => next.self_cost_epsilon_h = num(value)?,
            "crosslayer_radius_km" => next.crosslayer_radius_km = num(value)?,
            "distance" => next.distance = value.parse()?,
            _ => return Ok(false),
        }
        next.validate()?;
        *self = next;
        Ok(true)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.tau_km > 0.0) {
            return Err("tau must be positive".into());
        }
        if !(self.beta > 0.0) {
            return Err("beta must be positive".into());
        }
        if self.max_candidates < 1 {
            return Err("k must be at least 1".into());
        }
        if !(self.self_cost_epsilon_h > 0.0) {
            return Err("self_cost_epsilon_h must be positive".into());
        }
        if !(self.crosslayer_radius_km > 0.0) {
            return Err("crosslayer_radius_km must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    CtMapper,
    Baseline1,
    Baseline2,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::CtMapper, Algorithm::Baseline1, Algorithm::Baseline2];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::CtMapper => "ctmapper",
            Algorithm::Baseline1 => "baseline1",
            Algorithm::Baseline2 => "baseline2",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown algorithm '{s}' (ctmapper|baseline1|baseline2)"))
    }
}

/// Transition model used by the Viterbi pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransitionModel {
    /// Inverse travel-time cost of the least-cost path.
    CtMapper,
    /// Uniform choice among outgoing edges along the fewest-hop path.
    Baseline2,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    /// Seconds since the epoch.
    pub timestamp: i64,
    pub tower_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellularTrajectory {
    pub id: String,
    pub observations: Vec<Observation>,
}

impl CellularTrajectory {
    pub fn new(id: impl Into<String>, observations: Vec<Observation>) -> Result<Self, MapError> {
        let traj = Self {
            id: id.into(),
            observations,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<(), MapError> {
        let invalid = |reason: &str| MapError::InvalidTrajectory {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.observations.len() < 2 {
            return Err(invalid("needs at least two observations"));
        }
        if self.observations.windows(2).any(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(invalid("timestamps must be strictly increasing"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// One graph node per observation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkeletonPath {
    pub trajectory_id: String,
    pub nodes: Vec<usize>,
    /// Sum of log emission and log transition scores; absent for snapping baselines.
    pub log_score: Option<f64>,
}

/// Node sequence in which consecutive nodes are adjacent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodePath {
    pub trajectory_id: String,
    pub nodes: Vec<usize>,
    /// Position of each skeleton node inside `nodes` (non-decreasing).
    pub skeleton_indices: Vec<usize>,
}

pub type CompletePath = NodePath;

impl NodePath {
    pub fn skeleton_nodes(&self) -> Vec<usize> {
        self.skeleton_indices.iter().map(|&i| self.nodes[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mapping {
    pub algorithm: Algorithm,
    pub skeleton: SkeletonPath,
    pub complete: CompletePath,
}

/// Candidate hidden state for one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub node: usize,
    pub emission: f64,
    pub distance_km: f64,
}

/// Emission score for a tower/node distance. `r_max` is capped at tau.
pub fn emission_at_distance(d: f64, r_max: f64, params: &MapperParams) -> f64 {
    let r = r_max.min(params.tau_km);
    if d <= r {
        1.0
    } else if d <= params.tau_km {
        (r / d).powf(params.beta)
    } else {
        0.0
    }
}

pub fn emission_score(tower: &CellTower, node: &Node, params: &MapperParams) -> f64 {
    let d = params.distance.distance(tower.position(), node.position());
    emission_at_distance(d, tower.r_max, params)
}

/// The `K` best-scoring nodes for an observation, falling back to the single
/// nearest node when none lies within tau.
pub fn candidate_states(
    graph: &MultilayerGraph,
    network: &CellularNetwork,
    obs: &Observation,
    params: &MapperParams,
) -> Result<Vec<Candidate>, MapError> {
    if graph.node_count() == 0 {
        return Err(MapError::EmptyGraph);
    }
    let tower = network
        .tower_by_id(&obs.tower_id)
        .map_err(|_| MapError::UnknownTower(obs.tower_id.clone()))?;
    let mut all: Vec<Candidate> = graph
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let d = params.distance.distance(tower.position(), n.position());
            Candidate {
                node: i,
                emission: emission_at_distance(d, tower.r_max, params),
                distance_km: d,
            }
        })
        .collect();
    let by_rank = |a: &Candidate, b: &Candidate| {
        b.emission
            .total_cmp(&a.emission)
            .then(a.distance_km.total_cmp(&b.distance_km))
            .then(a.node.cmp(&b.node))
    };
    if all.iter().all(|c| c.emission <= 0.0) {
        let nearest = all
            .into_iter()
            .min_by(|a, b| a.distance_km.total_cmp(&b.distance_km).then(a.node.cmp(&b.node)))
            .expect("graph is not empty");
        log::info!(
            "no node within tau of tower {}; falling back to nearest node {}",
            tower.id,
            graph.node(nearest.node).id
        );
        return Ok(vec![Candidate {
            emission: FALLBACK_EMISSION,
            ..nearest
        }]);
    }
    all.retain(|c| c.emission > 0.0);
    all.sort_by(by_rank);
    all.truncate(params.max_candidates);
    Ok(all)
}

/// Nearest graph node to a tower (ties to the smaller id).
pub fn nearest_node(graph: &MultilayerGraph, tower: &CellTower, metric: DistanceMetric) -> Option<usize> {
    (0..graph.node_count())
        .map(|i| (metric.distance(tower.position(), graph.position(i)), i))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, i)| i)
}

fn self_cost(graph: &MultilayerGraph, v: usize, params: &MapperParams) -> f64 {
    match params.self_cost_mode {
        SelfCostMode::FixedEpsilon => params.self_cost_epsilon_h,
        SelfCostMode::HalfMinEdge => graph
            .neighbors(v)
            .iter()
            .map(|&(_, ei)| graph.edge(ei).cost())
            .min_by(f64::total_cmp)
            .map(|c| c / 2.0)
            .unwrap_or(params.self_cost_epsilon_h),
    }
}

/// Per-trajectory memo of shortest-path searches behind transition scores.
pub struct TransitionCache<'g> {
    graph: &'g MultilayerGraph,
    params: MapperParams,
    model: TransitionModel,
    cost_from: HashMap<usize, Vec<f64>>,
    hops_to: HashMap<usize, Vec<u32>>,
}

impl<'g> TransitionCache<'g> {
    pub fn new(graph: &'g MultilayerGraph, params: &MapperParams, model: TransitionModel) -> Self {
        Self {
            graph,
            params: *params,
            model,
            cost_from: HashMap::new(),
            hops_to: HashMap::new(),
        }
    }

    /// Transition score between node indices; zero when unreachable.
    pub fn score(&mut self, vi: usize, vj: usize) -> f64 {
        match self.model {
            TransitionModel::CtMapper => {
                if vi == vj {
                    return 1.0 / self_cost(self.graph, vi, &self.params);
                }
                let graph = self.graph;
                let cost = self.cost_from.entry(vi).or_insert_with(|| graph.dijkstra(vi))[vj];
                if cost.is_finite() {
                    1.0 / cost
                } else {
                    0.0
                }
            }
            TransitionModel::Baseline2 => {
                let k_i = self.graph.degree_of(vi).max(1) as f64;
                if vi == vj {
                    return 1.0 / k_i;
                }
                let graph = self.graph;
                let hops = self.hops_to.entry(vj).or_insert_with(|| graph.bfs_hops(vj));
                match graph.hop_path_with_target_hops(vi, vj, hops) {
                    Some(path) => {
                        let interior: f64 = path[1..path.len() - 1].iter().map(|&n| graph.degree_of(n) as f64).product();
                        1.0 / (k_i * interior)
                    }
                    None => 0.0,
                }
            }
        }
    }
}

/// Inverse least travel-time cost between two nodes (0 when unreachable).
pub fn transition_score(graph: &MultilayerGraph, vi: &str, vj: &str, params: &MapperParams) -> Result<f64, MapError> {
    let (a, b) = (graph.require(vi)?, graph.require(vj)?);
    Ok(TransitionCache::new(graph, params, TransitionModel::CtMapper).score(a, b))
}

/// Uniform-outgoing-edge transition score along the fewest-hop path.
pub fn baseline2_transition_score(graph: &MultilayerGraph, vi: &str, vj: &str) -> Result<f64, MapError> {
    let (a, b) = (graph.require(vi)?, graph.require(vj)?);
    Ok(TransitionCache::new(graph, &MapperParams::default(), TransitionModel::Baseline2).score(a, b))
}

/// Candidate sets with their log emission and log transition scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub candidates: Vec<Vec<Candidate>>,
    pub log_emission: Vec<Vec<f64>>,
    /// `log_transition[t][i][j]` from candidate `i` at `t-1` to `j` at `t`; empty at `t = 0`.
    pub log_transition: Vec<Vec<Vec<f64>>>,
}

impl Lattice {
    pub fn steps(&self) -> usize {
        self.candidates.len()
    }

    /// Builds a lattice directly from candidate sets and a transition function.
    pub fn from_parts<F: FnMut(usize, usize) -> f64>(candidates: Vec<Vec<Candidate>>, mut transition: F) -> Self {
        let log_emission = candidates
            .iter()
            .map(|cs| cs.iter().map(|c| c.emission.ln()).collect())
            .collect();
        let mut log_transition = vec![Vec::new()];
        for t in 1..candidates.len() {
            let rows = candidates[t - 1]
                .iter()
                .map(|a| candidates[t].iter().map(|b| transition(a.node, b.node).ln()).collect())
                .collect();
            log_transition.push(rows);
        }
        Self {
            candidates,
            log_emission,
            log_transition,
        }
    }

    /// Score of a candidate sequence, accumulated in the same order as the decoder.
    pub fn sequence_score(&self, choice: &[usize]) -> f64 {
        let mut acc = self.log_emission[0][choice[0]];
        for t in 1..choice.len() {
            acc = acc + self.log_transition[t][choice[t - 1]][choice[t]] + self.log_emission[t][choice[t]];
        }
        acc
    }

    pub fn nodes_of(&self, choice: &[usize]) -> Vec<usize> {
        choice.iter().enumerate().map(|(t, &c)| self.candidates[t][c].node).collect()
    }
}

pub fn build_lattice(
    graph: &MultilayerGraph,
    network: &CellularNetwork,
    traj: &CellularTrajectory,
    params: &MapperParams,
    model: TransitionModel,
) -> Result<Lattice, MapError> {
    traj.validate()?;
    let candidates = traj
        .observations
        .iter()
        .map(|o| candidate_states(graph, network, o, params))
        .collect::<Result<Vec<_>, _>>()?;
    let mut cache = TransitionCache::new(graph, params, model);
    Ok(Lattice::from_parts(candidates, |a, b| cache.score(a, b)))
}

/// Log-domain Viterbi over a lattice. Returns candidate positions and the best score.
///
/// Ties at every max go to the candidate with the smaller node index.
pub fn viterbi(lattice: &Lattice) -> Result<(Vec<usize>, f64), MapError> {
    let steps = lattice.steps();
    let mut score = lattice.log_emission[0].clone();
    let mut parents: Vec<Vec<usize>> = vec![Vec::new()];
    if score.iter().all(|s| *s == f64::NEG_INFINITY) {
        return Err(MapError::ZeroLikelihood { step: 0 });
    }
    for t in 1..steps {
        let prev_cands = &lattice.candidates[t - 1];
        let cands = &lattice.candidates[t];
        let mut next = vec![f64::NEG_INFINITY; cands.len()];
        let mut parent = vec![0usize; cands.len()];
        for (j, slot) in next.iter_mut().enumerate() {
            let mut best = f64::NEG_INFINITY;
            let mut best_i = usize::MAX;
            for i in 0..prev_cands.len() {
                let s = score[i] + lattice.log_transition[t][i][j];
                if s == f64::NEG_INFINITY {
                    continue;
                }
                if best_i == usize::MAX || s > best || (s == best && prev_cands[i].node < prev_cands[best_i].node) {
                    best = s;
                    best_i = i;
                }
            }
            if best_i != usize::MAX {
                *slot = best + lattice.log_emission[t][j];
                parent[j] = best_i;
            }
        }
        if next.iter().all(|s| *s == f64::NEG_INFINITY) {
            return Err(MapError::ZeroLikelihood { step: t });
        }
        score = next;
        parents.push(parent);
    }
    let last = &lattice.candidates[steps - 1];
    let mut end = usize::MAX;
    for j in 0..last.len() {
        if score[j] == f64::NEG_INFINITY {
            continue;
        }
        if end == usize::MAX || score[j] > score[end] || (score[j] == score[end] && last[j].node < last[end].node) {
            end = j;
        }
    }
    let best = score[end];
    let mut choice = vec![end; steps];
    for t in (1..steps).rev() {
        choice[t - 1] = parents[t][choice[t]];
    }
    Ok((choice, best))
}

pub fn viterbi_skeleton(
    graph: &MultilayerGraph,
    network: &CellularNetwork,
    traj: &CellularTrajectory,
    params: &MapperParams,
    model: TransitionModel,
) -> Result<SkeletonPath, MapError> {
    let lattice = build_lattice(graph, network, traj, params, model)?;
    let (choice, score) = viterbi(&lattice)?;
    Ok(SkeletonPath {
        trajectory_id: traj.id.clone(),
        nodes: lattice.nodes_of(&choice),
        log_score: Some(score),
    })
}

/// Joins consecutive skeleton nodes with least travel-time paths. Repeated
/// nodes collapse and adjacent nodes are joined directly.
pub fn complete_path(graph: &MultilayerGraph, skeleton: &SkeletonPath) -> Result<CompletePath, MapError> {
    let mut nodes: Vec<usize> = Vec::with_capacity(skeleton.nodes.len() * 4);
    let mut skeleton_indices = Vec::with_capacity(skeleton.nodes.len());
    let mut to_target: HashMap<usize, Vec<f64>> = HashMap::new();
    for &v in &skeleton.nodes {
        match nodes.last().copied() {
            None => nodes.push(v),
            Some(prev) if prev == v => {}
            Some(prev) if graph.are_adjacent(prev, v) => nodes.push(v),
            Some(prev) => {
                let dist = to_target.entry(v).or_insert_with(|| graph.dijkstra(v));
                let route = graph
                    .route_with_target_distances(prev, v, dist)
                    .ok_or_else(|| MapError::Unreachable {
                        from: graph.node(prev).id.clone(),
                        to: graph.node(v).id.clone(),
                    })?;
                nodes.extend_from_slice(&route.nodes[1..]);
            }
        }
        skeleton_indices.push(nodes.len() - 1);
    }
    Ok(CompletePath {
        trajectory_id: skeleton.trajectory_id.clone(),
        nodes,
        skeleton_indices,
    })
}

/// Snaps every observation to the nearest node, then completes the path.
pub fn baseline1_skeleton(
    graph: &MultilayerGraph,
    network: &CellularNetwork,
    traj: &CellularTrajectory,
    params: &MapperParams,
) -> Result<SkeletonPath, MapError> {
    traj.validate()?;
    if graph.node_count() == 0 {
        return Err(MapError::EmptyGraph);
    }
    let nodes = traj
        .observations
        .iter()
        .map(|o| {
            let tower = network
                .tower_by_id(&o.tower_id)
                .map_err(|_| MapError::UnknownTower(o.tower_id.clone()))?;
            Ok(nearest_node(graph, tower, params.distance).expect("graph is not empty"))
        })
        .collect::<Result<Vec<_>, MapError>>()?;
    Ok(SkeletonPath {
        trajectory_id: traj.id.clone(),
        nodes,
        log_score: None,
    })
}

pub fn baseline1_map(
    graph: &MultilayerGraph,
    network: &CellularNetwork,
    traj: &CellularTrajectory,
    params: &MapperParams,
) -> Result<CompletePath, MapError> {
    complete_path(graph, &baseline1_skeleton(graph, network, traj, params)?)
}

/// Runs both phases with the chosen algorithm.
pub fn map_trajectory(
    graph: &MultilayerGraph,
    network: &CellularNetwork,
    traj: &CellularTrajectory,
    params: &MapperParams,
    algorithm: Algorithm,
) -> Result<Mapping, MapError> {
    let skeleton = match algorithm {
        Algorithm::CtMapper => viterbi_skeleton(graph, network, traj, params, TransitionModel::CtMapper)?,
        Algorithm::Baseline2 => viterbi_skeleton(graph, network, traj, params, TransitionModel::Baseline2)?,
        Algorithm::Baseline1 => baseline1_skeleton(graph, network, traj, params)?,
    };
    let complete = complete_path(graph, &skeleton)?;
    Ok(Mapping {
        algorithm,
        skeleton,
        complete,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeClass, EdgeSpec, Layer};

    fn params() -> MapperParams {
        MapperParams::default()
    }

    #[test]
    fn emission_branches() {
        let p = params();
        assert_eq!(emission_at_distance(0.5, 1.0, &p), 1.0);
        assert_eq!(emission_at_distance(2.0, 1.0, &p), 0.25);
        assert_eq!(emission_at_distance(6.0, 1.0, &p), 0.0);
        assert!((emission_at_distance(5.0, 1.0, &p) - 1.0 / 25.0).abs() < 1e-15);
        // r_max beyond tau is capped at tau
        assert_eq!(emission_at_distance(5.5, 9.0, &p), 0.0);
    }

    fn line_graph(classes: &[(EdgeClass, f64)], layer: Layer) -> MultilayerGraph {
        let nodes = (0..=classes.len())
            .map(|i| Node::new(format!("n{i}"), 48.85 + 0.01 * i as f64, 2.35, layer))
            .collect();
        let edges = classes
            .iter()
            .enumerate()
            .map(|(i, &(c, len))| EdgeSpec::new(format!("n{i}"), format!("n{}", i + 1), c, Some(len)))
            .collect();
        MultilayerGraph::new(nodes, edges).unwrap()
    }

    #[test]
    fn transition_fixtures() {
        let metro = line_graph(&[(EdgeClass::Metro, 0.8)], Layer::Metro);
        let tr = transition_score(&metro, "n0", "n1", &params()).unwrap();
        assert!((tr - 100.0).abs() < 1e-9, "{tr}");
        let road = line_graph(&[(EdgeClass::RoadLocal, 1.0), (EdgeClass::RoadLocal, 2.0)], Layer::Road);
        let tr = transition_score(&road, "n0", "n2", &params()).unwrap();
        assert!((tr - 10.0).abs() < 1e-9, "{tr}");
        // self transition: half of the cheapest incident edge (1 km local = 1/30 h)
        let tr = transition_score(&road, "n1", "n1", &params()).unwrap();
        assert!((tr - 60.0).abs() < 1e-9);
        assert!(transition_score(&road, "n0", "zz", &params()).is_err());
    }

    #[test]
    fn transition_zero_when_disconnected() {
        let g = MultilayerGraph::new(
            vec![Node::new("a", 48.0, 2.0, Layer::Road), Node::new("b", 48.1, 2.0, Layer::Road)],
            vec![],
        )
        .unwrap();
        assert_eq!(transition_score(&g, "a", "b", &params()).unwrap(), 0.0);
        assert_eq!(baseline2_transition_score(&g, "a", "b").unwrap(), 0.0);
    }

    #[test]
    fn baseline2_fixtures() {
        // star-ish: a has degree 3, b adjacent
        let g = MultilayerGraph::new(
            vec![
                Node::new("a", 48.0, 2.0, Layer::Road),
                Node::new("b", 48.01, 2.0, Layer::Road),
                Node::new("c", 48.0, 2.01, Layer::Road),
                Node::new("d", 47.99, 2.0, Layer::Road),
            ],
            vec![
                EdgeSpec::new("a", "b", EdgeClass::RoadLocal, None),
                EdgeSpec::new("a", "c", EdgeClass::RoadLocal, None),
                EdgeSpec::new("a", "d", EdgeClass::RoadLocal, None),
            ],
        )
        .unwrap();
        assert_eq!(baseline2_transition_score(&g, "a", "b").unwrap(), 1.0 / 3.0);
        // b (deg 1) -> c through a (deg 3)
        assert_eq!(baseline2_transition_score(&g, "b", "c").unwrap(), 1.0 / 3.0);
        assert_eq!(baseline2_transition_score(&g, "a", "a").unwrap(), 1.0 / 3.0);

        // vi degree 2, one interior node of degree 4 -> 1/8
        let h = MultilayerGraph::new(
            vec![
                Node::new("v", 48.0, 2.0, Layer::Road),
                Node::new("w", 48.0, 2.02, Layer::Road),
                Node::new("x", 48.01, 2.01, Layer::Road),
                Node::new("y", 48.0, 2.01, Layer::Road),
                Node::new("z", 47.99, 2.01, Layer::Road),
                Node::new("q", 47.99, 2.0, Layer::Road),
            ],
            vec![
                EdgeSpec::new("v", "y", EdgeClass::RoadLocal, None),
                EdgeSpec::new("v", "q", EdgeClass::RoadLocal, None),
                EdgeSpec::new("y", "w", EdgeClass::RoadLocal, None),
                EdgeSpec::new("y", "x", EdgeClass::RoadLocal, None),
                EdgeSpec::new("y", "z", EdgeClass::RoadLocal, None),
            ],
        )
        .unwrap();
        assert_eq!(baseline2_transition_score(&h, "v", "w").unwrap(), 1.0 / 8.0);
    }

    #[test]
    fn trajectory_validation() {
        let obs = |t: i64| Observation { timestamp: t, tower_id: "x".into() };
        assert!(CellularTrajectory::new("a", vec![obs(1)]).is_err());
        assert!(CellularTrajectory::new("a", vec![obs(2), obs(2)]).is_err());
        assert!(CellularTrajectory::new("a", vec![obs(1), obs(2)]).is_ok());
    }

    #[test]
    fn viterbi_prefers_smaller_node_on_ties() {
        let c = |node| Candidate { node, emission: 1.0, distance_km: 0.0 };
        let lattice = Lattice::from_parts(vec![vec![c(5), c(2)], vec![c(7), c(3)]], |_, _| 1.0);
        let (choice, score) = viterbi(&lattice).unwrap();
        assert_eq!(lattice.nodes_of(&choice), vec![2, 3]);
        assert_eq!(score, 0.0);
    }

    #[test]
    fn viterbi_reports_dead_step() {
        let c = |node| Candidate { node, emission: 1.0, distance_km: 0.0 };
        let lattice = Lattice::from_parts(vec![vec![c(0)], vec![c(1)], vec![c(2)]], |a, b| if (a, b) == (1, 2) { 0.0 } else { 1.0 });
        assert_eq!(viterbi(&lattice), Err(MapError::ZeroLikelihood { step: 2 }));
    }

    #[test]
    fn completion_examples() {
        let g = line_graph(&[(EdgeClass::RoadLocal, 1.0), (EdgeClass::RoadLocal, 1.0)], Layer::Road);
        let sk = |nodes: Vec<usize>| SkeletonPath { trajectory_id: "t".into(), nodes, log_score: None };
        let c = complete_path(&g, &sk(vec![0, 2])).unwrap();
        assert_eq!(c.nodes, vec![0, 1, 2]);
        assert_eq!(c.skeleton_indices, vec![0, 2]);
        let c = complete_path(&g, &sk(vec![0, 1, 2])).unwrap();
        assert_eq!(c.nodes, vec![0, 1, 2]);
        let c = complete_path(&g, &sk(vec![0, 0])).unwrap();
        assert_eq!(c.nodes, vec![0]);
        assert_eq!(c.skeleton_indices, vec![0, 0]);
    }

    #[test]
    fn params_overrides() {
        let mut p = params();
        assert!(p.set("tau", "3.5").unwrap());
        assert_eq!(p.tau_km, 3.5);
        assert!(p.set("self_cost_mode", "fixed-epsilon").unwrap());
        assert!(!p.set("seed", "1").unwrap());
        assert!(p.set("k", "0").is_err());
        assert!(p.set("distance", "manhattan").is_err());
    }
}
