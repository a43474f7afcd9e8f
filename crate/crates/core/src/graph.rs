//! Multilayer transportation graph.
//!
//! Nodes are kept sorted by id, so a node index orders exactly like its id.
//! Every "smaller id wins" tie rule in the crate relies on this and compares
//! plain indices.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{DistanceMetric, LatLon};

/// Floor applied to lengths derived from endpoint positions.
pub const MIN_COMPUTED_LENGTH_KM: f64 = 0.01;

/// Relative tolerance used to decide that two path costs are equal.
const COST_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("duplicate node id '{0}'")]
    DuplicateNode(String),
    #[error("edge references unknown node '{id}'{}", line_suffix(*.line))]
    DanglingEndpoint { id: String, line: Option<u64> },
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error("invalid edge {src}-{dst}: {reason}")]
    InvalidEdge {
        src: String,
        dst: String,
        reason: String,
    },
    #[error("invalid node '{id}': {reason}")]
    InvalidNode { id: String, reason: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn line_suffix(line: Option<u64>) -> String {
    line.map(|l| format!(" (line {l})")).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Road,
    Metro,
    Train,
}

impl Layer {
    pub const ALL: [Layer; 3] = [Layer::Road, Layer::Metro, Layer::Train];

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Road => "road",
            Layer::Metro => "metro",
            Layer::Train => "train",
        }
    }

    pub fn is_station(self) -> bool {
        !matches!(self, Layer::Road)
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "road" => Ok(Layer::Road),
            "metro" => Ok(Layer::Metro),
            "train" => Ok(Layer::Train),
            other => Err(format!("unknown layer '{other}'")),
        }
    }
}

/// Edge classes with their travel-time weights (hours per kilometer).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeClass {
    Metro,
    RoadHighway,
    RoadPrincipal,
    RoadRegional,
    RoadLocal,
    Crosslayer,
    Train,
}

impl EdgeClass {
    pub const ALL: [EdgeClass; 7] = [
        EdgeClass::Metro,
        EdgeClass::RoadHighway,
        EdgeClass::RoadPrincipal,
        EdgeClass::RoadRegional,
        EdgeClass::RoadLocal,
        EdgeClass::Crosslayer,
        EdgeClass::Train,
    ];

    /// Inverse of the average speed in km/h.
    pub fn weight(self) -> f64 {
        1.0 / self.speed_kmh()
    }

    pub fn speed_kmh(self) -> f64 {
        match self {
            EdgeClass::Metro => 80.0,
            EdgeClass::RoadHighway => 90.0,
            EdgeClass::RoadPrincipal => 60.0,
            EdgeClass::RoadRegional => 40.0,
            EdgeClass::RoadLocal => 30.0,
            EdgeClass::Crosslayer => 10.0,
            EdgeClass::Train => 100.0,
        }
    }

    /// Layer both endpoints must share, or `None` for cross-layer edges.
    pub fn layer(self) -> Option<Layer> {
        match self {
            EdgeClass::Metro => Some(Layer::Metro),
            EdgeClass::Train => Some(Layer::Train),
            EdgeClass::Crosslayer => None,
            _ => Some(Layer::Road),
        }
    }

    /// Class given to an intra-layer edge when no finer class is known.
    pub fn default_for(layer: Layer) -> EdgeClass {
        match layer {
            Layer::Road => EdgeClass::RoadLocal,
            Layer::Metro => EdgeClass::Metro,
            Layer::Train => EdgeClass::Train,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeClass::Metro => "metro",
            EdgeClass::RoadHighway => "road_highway",
            EdgeClass::RoadPrincipal => "road_principal",
            EdgeClass::RoadRegional => "road_regional",
            EdgeClass::RoadLocal => "road_local",
            EdgeClass::Crosslayer => "crosslayer",
            EdgeClass::Train => "train",
        }
    }
}

impl fmt::Display for EdgeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EdgeClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown edge class '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub layer: Layer,
}

impl Node {
    pub fn new(id: impl Into<String>, lat: f64, lon: f64, layer: Layer) -> Self {
        Self {
            id: id.into(),
            lat,
            lon,
            layer,
        }
    }

    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

/// Undirected edge between two node indices, stored with `src < dst`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub class: EdgeClass,
    pub length_km: f64,
}

impl Edge {
    pub fn weight(&self) -> f64 {
        self.class.weight()
    }

    /// Travel time in hours.
    pub fn cost(&self) -> f64 {
        self.weight() * self.length_km
    }

    pub fn other(&self, v: usize) -> usize {
        if v == self.src {
            self.dst
        } else {
            self.src
        }
    }
}

/// Edge description by node id, as read from an edges file.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSpec {
    pub src: String,
    pub dst: String,
    pub class: EdgeClass,
    /// `None` means "use the endpoint distance".
    pub length_km: Option<f64>,
    pub line: Option<u64>,
}

impl EdgeSpec {
    pub fn new(src: impl Into<String>, dst: impl Into<String>, class: EdgeClass, length_km: Option<f64>) -> Self {
        Self {
            src: src.into(),
            dst: dst.into(),
            class,
            length_km,
            line: None,
        }
    }
}

/// Lowest-cost route between two nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Route {
    /// Hours.
    pub cost: f64,
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultilayerGraph {
    nodes: Vec<Node>,
    index: HashMap<String, usize>,
    edges: Vec<Edge>,
    /// Per node: (neighbor, edge index), sorted by neighbor.
    adjacency: Vec<Vec<(usize, usize)>>,
    metric: DistanceMetric,
}

fn validate_id(id: &str) -> Result<(), String> {
    if id.is_empty() {
        return Err("empty id".into());
    }
    if id.chars().any(|c| matches!(c, ',' | '"' | '\n' | '\r') || c.is_whitespace()) {
        return Err("ids may not contain commas, quotes or whitespace".into());
    }
    Ok(())
}

impl MultilayerGraph {
    pub fn new(nodes: Vec<Node>, edges: Vec<EdgeSpec>) -> Result<Self, GraphError> {
        Self::with_metric(nodes, edges, DistanceMetric::default())
    }

    /// Builds a graph, validating every node and edge.
    pub fn with_metric(
        mut nodes: Vec<Node>,
        edges: Vec<EdgeSpec>,
        metric: DistanceMetric,
    ) -> Result<Self, GraphError> {
        for n in &nodes {
            validate_id(&n.id).map_err(|reason| GraphError::InvalidNode {
                id: n.id.clone(),
                reason,
            })?;
            if !n.position().is_valid() {
                return Err(GraphError::InvalidNode {
                    id: n.id.clone(),
                    reason: format!("coordinates out of range ({}, {})", n.lat, n.lon),
                });
            }
        }
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = nodes.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(GraphError::DuplicateNode(w[0].id.clone()));
        }
        let index: HashMap<String, usize> = nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();

        let mut built = Vec::with_capacity(edges.len());
        for spec in edges {
            let lookup = |id: &str| {
                index.get(id).copied().ok_or_else(|| GraphError::DanglingEndpoint {
                    id: id.to_string(),
                    line: spec.line,
                })
            };
            let a = lookup(&spec.src)?;
            let b = lookup(&spec.dst)?;
            let invalid = |reason: String| GraphError::InvalidEdge {
                src: spec.src.clone(),
                dst: spec.dst.clone(),
                reason,
            };
            if a == b {
                return Err(invalid("self-loop".into()));
            }
            let (la, lb) = (nodes[a].layer, nodes[b].layer);
            match spec.class.layer() {
                None if la == lb => {
                    return Err(invalid(format!("crosslayer edge inside the {la} layer")));
                }
                Some(_) if la != lb => {
                    return Err(invalid(format!(
                        "class {} joins layers {la} and {lb}; use crosslayer",
                        spec.class
                    )));
                }
                Some(l) if l != la => {
                    return Err(invalid(format!("class {} between {la} nodes", spec.class)));
                }
                _ => {}
            }
            let length_km = match spec.length_km {
                Some(len) if len.is_finite() && len > 0.0 => len,
                Some(len) => return Err(invalid(format!("length {len} must be positive"))),
                None => metric
                    .distance(nodes[a].position(), nodes[b].position())
                    .max(MIN_COMPUTED_LENGTH_KM),
            };
            built.push(Edge {
                src: a.min(b),
                dst: a.max(b),
                class: spec.class,
                length_km,
            });
        }
        built.sort_by(|x, y| (x.src, x.dst).cmp(&(y.src, y.dst)));
        if let Some(w) = built.windows(2).find(|w| (w[0].src, w[0].dst) == (w[1].src, w[1].dst)) {
            return Err(GraphError::InvalidEdge {
                src: nodes[w[0].src].id.clone(),
                dst: nodes[w[0].dst].id.clone(),
                reason: "duplicate edge".into(),
            });
        }
        Ok(Self::assemble(nodes, index, built, metric))
    }

    fn assemble(nodes: Vec<Node>, index: HashMap<String, usize>, edges: Vec<Edge>, metric: DistanceMetric) -> Self {
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (ei, e) in edges.iter().enumerate() {
            adjacency[e.src].push((e.dst, ei));
            adjacency[e.dst].push((e.src, ei));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Self {
            nodes,
            index,
            edges,
            adjacency,
            metric,
        }
    }

    /// Reads the nodes and edges text formats.
    pub fn load<R1: Read, R2: Read>(nodes_src: R1, edges_src: R2) -> Result<Self, GraphError> {
        Self::load_with_metric(nodes_src, edges_src, DistanceMetric::default())
    }

    pub fn load_with_metric<R1: Read, R2: Read>(
        nodes_src: R1,
        edges_src: R2,
        metric: DistanceMetric,
    ) -> Result<Self, GraphError> {
        let nodes = read_nodes(nodes_src)?;
        let edges = read_edges(edges_src)?;
        Self::with_metric(nodes, edges, metric)
    }

    /// Writes both files sorted by id; output is a pure function of the graph.
    pub fn save<W1: Write, W2: Write>(&self, mut nodes_out: W1, mut edges_out: W2) -> Result<(), GraphError> {
        writeln!(nodes_out, "id,lat,lon,layer")?;
        for n in &self.nodes {
            writeln!(nodes_out, "{},{},{},{}", n.id, n.lat, n.lon, n.layer)?;
        }
        writeln!(edges_out, "src,dst,class,length_km")?;
        for e in &self.edges {
            writeln!(
                edges_out,
                "{},{},{},{}",
                self.nodes[e.src].id, self.nodes[e.dst].id, e.class, e.length_km
            )?;
        }
        Ok(())
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    pub fn position(&self, idx: usize) -> LatLon {
        self.nodes[idx].position()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn require(&self, id: &str) -> Result<usize, GraphError> {
        self.index_of(id).ok_or_else(|| GraphError::UnknownNode(id.to_string()))
    }

    pub fn neighbors(&self, idx: usize) -> &[(usize, usize)] {
        &self.adjacency[idx]
    }

    pub fn edge(&self, idx: usize) -> &Edge {
        &self.edges[idx]
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<&Edge> {
        self.adjacency[a]
            .binary_search_by(|(n, _)| n.cmp(&b))
            .ok()
            .map(|pos| &self.edges[self.adjacency[a][pos].1])
    }

    pub fn are_adjacent(&self, a: usize, b: usize) -> bool {
        self.edge_between(a, b).is_some()
    }

    pub fn degree_of(&self, idx: usize) -> usize {
        self.adjacency[idx].len()
    }

    pub fn degree(&self, id: &str) -> Result<usize, GraphError> {
        Ok(self.degree_of(self.require(id)?))
    }

    /// Distance between two nodes under the graph's metric.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.metric.distance(self.position(a), self.position(b))
    }

    /// Subgraph of one layer: its nodes and the edges whose endpoints both lie in it.
    pub fn layer_view(&self, layer: Layer) -> MultilayerGraph {
        self.filtered(|n| n.layer == layer)
    }

    /// Nodes matching `keep` together with every edge between kept nodes.
    pub fn filtered<F: Fn(&Node) -> bool>(&self, keep: F) -> MultilayerGraph {
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if keep(n) {
                remap[i] = nodes.len();
                nodes.push(n.clone());
            }
        }
        let edges = self
            .edges
            .iter()
            .filter(|e| remap[e.src] != usize::MAX && remap[e.dst] != usize::MAX)
            .map(|e| Edge {
                src: remap[e.src],
                dst: remap[e.dst],
                ..*e
            })
            .collect();
        let index = nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
        Self::assemble(nodes, index, edges, self.metric)
    }

    pub fn crosslayer_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.class == EdgeClass::Crosslayer)
    }

    /// Adds a cross-layer edge from every metro/train station to its nearest
    /// node of each other layer within `radius_km`. Idempotent.
    pub fn connect_layers(&self, radius_km: f64) -> (MultilayerGraph, ConnectReport) {
        assert!(radius_km > 0.0, "crosslayer radius must be positive");
        let mut added = Vec::new();
        let mut unconnected = Vec::new();
        for (s, station) in self.nodes.iter().enumerate() {
            if !station.layer.is_station() {
                continue;
            }
            let mut linked_any = false;
            for other in Layer::ALL.into_iter().filter(|&l| l != station.layer) {
                let nearest = self
                    .nodes
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| n.layer == other)
                    .map(|(i, _)| (self.distance(s, i), i))
                    .filter(|&(d, _)| d <= radius_km)
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                if let Some((d, t)) = nearest {
                    linked_any = true;
                    let key = (s.min(t), s.max(t));
                    if self.are_adjacent(s, t) || added.iter().any(|e: &Edge| (e.src, e.dst) == key) {
                        continue;
                    }
                    added.push(Edge {
                        src: key.0,
                        dst: key.1,
                        class: EdgeClass::Crosslayer,
                        length_km: d.max(MIN_COMPUTED_LENGTH_KM),
                    });
                }
            }
            if !linked_any {
                unconnected.push(station.id.clone());
            }
        }
        let report = ConnectReport {
            added: added.len(),
            unconnected_stations: unconnected,
        };
        let mut edges = self.edges.clone();
        edges.extend(added);
        edges.sort_by(|x, y| (x.src, x.dst).cmp(&(y.src, y.dst)));
        let graph = Self::assemble(self.nodes.clone(), self.index.clone(), edges, self.metric);
        (graph, report)
    }

    /// Travel-time distances (hours) from `source` to every node; `INFINITY` when unreachable.
    pub fn dijkstra(&self, source: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapEntry { cost: 0.0, node: source });
        while let Some(HeapEntry { cost, node }) = heap.pop() {
            if cost > dist[node] {
                continue;
            }
            for &(next, ei) in &self.adjacency[node] {
                let c = cost + self.edges[ei].cost();
                if c < dist[next] {
                    dist[next] = c;
                    heap.push(HeapEntry { cost: c, node: next });
                }
            }
        }
        dist
    }

    /// Hop counts from `source`; `u32::MAX` when unreachable.
    pub fn bfs_hops(&self, source: usize) -> Vec<u32> {
        let mut hops = vec![u32::MAX; self.nodes.len()];
        let mut queue = std::collections::VecDeque::new();
        hops[source] = 0;
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            for &(n, _) in &self.adjacency[v] {
                if hops[n] == u32::MAX {
                    hops[n] = hops[v] + 1;
                    queue.push_back(n);
                }
            }
        }
        hops
    }

    /// Lowest travel-time route; ties go to the lexicographically smallest id sequence.
    pub fn shortest_path(&self, from: &str, to: &str) -> Result<Option<Route>, GraphError> {
        let a = self.require(from)?;
        let b = self.require(to)?;
        let to_target = self.dijkstra(b);
        Ok(self.route_with_target_distances(a, b, &to_target))
    }

    /// Walks from `from` towards `to` given Dijkstra distances rooted at `to`.
    pub fn route_with_target_distances(&self, from: usize, to: usize, to_target: &[f64]) -> Option<Route> {
        let total = to_target[from];
        if !total.is_finite() {
            return None;
        }
        let tol = COST_TOLERANCE * total.max(1.0);
        let mut nodes = vec![from];
        let mut current = from;
        while current != to {
            // adjacency is sorted by index, so the first hit is the smallest id
            let next = self.adjacency[current]
                .iter()
                .find(|&&(n, ei)| {
                    let via = self.edges[ei].cost() + to_target[n];
                    to_target[n] < to_target[current] && (via - to_target[current]).abs() <= tol
                })
                .map(|&(n, _)| n)?;
            nodes.push(next);
            current = next;
        }
        Some(Route { cost: total, nodes })
    }

    /// Fewest-hop path with the lexicographically smallest id sequence, given
    /// BFS hop counts rooted at `to`.
    pub fn hop_path_with_target_hops(&self, from: usize, to: usize, to_target: &[u32]) -> Option<Vec<usize>> {
        if to_target[from] == u32::MAX {
            return None;
        }
        let mut path = vec![from];
        let mut current = from;
        while current != to {
            let want = to_target[current] - 1;
            let next = self.adjacency[current]
                .iter()
                .map(|&(n, _)| n)
                .find(|&n| to_target[n] == want)?;
            path.push(next);
            current = next;
        }
        Some(path)
    }

    /// Number of connected components.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.nodes.len()];
        let mut count = 0;
        for start in 0..self.nodes.len() {
            if seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(v) = stack.pop() {
                for &(n, _) in &self.adjacency[v] {
                    if !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        count
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() <= 1
    }

    /// Per-layer node/edge counts, mean degree and mean edge length, plus the crosslayer set.
    pub fn summary(&self) -> Vec<LayerSummary> {
        let mut rows: Vec<LayerSummary> = Layer::ALL
            .into_iter()
            .map(|l| {
                let view = self.layer_view(l);
                LayerSummary::of(l.as_str(), view.node_count(), view.edges.iter())
            })
            .collect();
        let cross_nodes = {
            let mut touched = vec![false; self.nodes.len()];
            for e in self.crosslayer_edges() {
                touched[e.src] = true;
                touched[e.dst] = true;
            }
            touched.iter().filter(|&&t| t).count()
        };
        rows.push(LayerSummary::of("crosslayer", cross_nodes, self.crosslayer_edges()));
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectReport {
    pub added: usize,
    pub unconnected_stations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerSummary {
    pub name: String,
    pub nodes: usize,
    pub edges: usize,
    pub mean_degree: f64,
    pub mean_length_km: f64,
}

impl LayerSummary {
    fn of<'a>(name: &str, nodes: usize, edges: impl Iterator<Item = &'a Edge>) -> Self {
        let (count, total) = edges.fold((0usize, 0.0), |(c, t), e| (c + 1, t + e.length_km));
        LayerSummary {
            name: name.to_string(),
            nodes,
            edges: count,
            mean_degree: if nodes == 0 { 0.0 } else { 2.0 * count as f64 / nodes as f64 },
            mean_length_km: if count == 0 { 0.0 } else { total / count as f64 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    cost: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub(crate) fn reader<R: Read>(src: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(src)
}

pub(crate) fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<(), GraphError> {
    let headers = rdr.headers()?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(GraphError::Malformed {
            line: 1,
            message: format!("expected header '{}', found '{}'", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

pub(crate) fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

pub(crate) fn csv_error(e: csv::Error) -> GraphError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    GraphError::Malformed {
        line,
        message: e.to_string(),
    }
}

fn parse_field<T: FromStr>(rec: &csv::StringRecord, i: usize, what: &str) -> Result<T, GraphError>
where
    T::Err: fmt::Display,
{
    rec[i].parse::<T>().map_err(|e| GraphError::Malformed {
        line: record_line(rec),
        message: format!("bad {what} '{}': {e}", &rec[i]),
    })
}

/// Reads `id,lat,lon,layer` records.
pub fn read_nodes<R: Read>(src: R) -> Result<Vec<Node>, GraphError> {
    let mut rdr = reader(src);
    check_header(&mut rdr, &["id", "lat", "lon", "layer"])?;
    let mut nodes = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        nodes.push(Node {
            id: rec[0].to_string(),
            lat: parse_field(&rec, 1, "lat")?,
            lon: parse_field(&rec, 2, "lon")?,
            layer: parse_field(&rec, 3, "layer")?,
        });
    }
    Ok(nodes)
}

/// Reads `src,dst,class,length_km` records; an empty length is derived from the endpoints.
pub fn read_edges<R: Read>(src: R) -> Result<Vec<EdgeSpec>, GraphError> {
    let mut rdr = reader(src);
    check_header(&mut rdr, &["src", "dst", "class", "length_km"])?;
    let mut edges = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let length_km = if rec[3].is_empty() {
            None
        } else {
            Some(parse_field::<f64>(&rec, 3, "length_km")?)
        };
        edges.push(EdgeSpec {
            src: rec[0].to_string(),
            dst: rec[1].to_string(),
            class: parse_field(&rec, 2, "class")?,
            length_km,
            line: Some(record_line(&rec)),
        });
    }
    Ok(edges)
}
