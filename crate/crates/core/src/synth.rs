//! Deterministic synthetic worlds and trips.
//!
//! A world is a jittered road lattice with straight metro and train lines
//! laid over it, joined by cross-layer edges, plus a jittered antenna grid.
//! Trips follow least travel-time routes and are observed every `interval_s`
//! seconds through the nearest antenna.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cellnet::{CellNetError, CellularNetwork, TowerSite};
use crate::eval::GroundTruthPath;
use crate::geo::{BoundingBox, LatLon, LocalProjection};
use crate::graph::{EdgeClass, EdgeSpec, GraphError, Layer, MultilayerGraph, Node};
use crate::mapper::{CellularTrajectory, Lattice, MapError, MapperParams, Observation, SkeletonPath, TransitionModel};

pub const MAX_WORLD_ATTEMPTS: u32 = 10;
pub const BRUTE_FORCE_BUDGET: u128 = 1_000_000;
const MAX_ENDPOINT_ATTEMPTS: u32 = 200;

/// Mean degree and mean edge length (km) each generated layer is held to, within 50 %.
pub const REFERENCE_LAYER_STATS: [(Layer, f64, f64); 3] = [
    (Layer::Road, 3.01, 1.34),
    (Layer::Metro, 2.35, 0.757),
    (Layer::Train, 2.025, 3.07),
];
pub const REALISM_TOLERANCE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no connected world after {0} attempts")]
    Disconnected(u32),
    #[error("generated {layer} layer is unrealistic: {detail}")]
    Unrealistic { layer: Layer, detail: String },
    #[error("trip lasts {duration_s:.0} s, shorter than one {interval_s} s interval")]
    TripTooShort { duration_s: f64, interval_s: u32 },
    #[error("no route between '{0}' and '{1}'")]
    Unreachable(String, String),
    #[error("could not find trip endpoints after {0} attempts")]
    NoEndpoints(u32),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    CellNet(#[from] CellNetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub center_lat: f64,
    pub center_lon: f64,
    pub road_rows: usize,
    pub road_cols: usize,
    pub road_spacing_km: f64,
    pub road_jitter_km: f64,
    /// Share of local road edges removed (never isolating or disconnecting).
    pub road_drop_fraction: f64,
    pub metro_lines: usize,
    pub metro_stations: usize,
    pub metro_spacing_km: f64,
    pub train_lines: usize,
    pub train_stations: usize,
    pub train_spacing_km: f64,
    pub crosslayer_radius_km: f64,
    pub antenna_spacing_km: f64,
    /// Antenna jitter as a fraction of the spacing.
    pub antenna_jitter: f64,
    pub interval_s: u32,
    /// Probability of reporting the second-nearest antenna.
    pub noise: f64,
    pub min_trip_km: f64,
    pub start_epoch: i64,
    pub check_realism: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            center_lat: 48.8566,
            center_lon: 2.3522,
            road_rows: 30,
            road_cols: 30,
            road_spacing_km: 1.0,
            road_jitter_km: 0.15,
            road_drop_fraction: 0.15,
            metro_lines: 3,
            metro_stations: 13,
            metro_spacing_km: 0.8,
            train_lines: 2,
            train_stations: 9,
            train_spacing_km: 3.0,
            crosslayer_radius_km: 1.0,
            antenna_spacing_km: 2.0,
            antenna_jitter: 0.2,
            interval_s: 900,
            noise: 0.15,
            min_trip_km: 6.0,
            start_epoch: 1_409_529_600,
            check_realism: true,
        }
    }
}

impl SynthConfig {
    pub const KEYS: [&'static str; 22] = [
        "seed",
        "center_lat",
        "center_lon",
        "road_rows",
        "road_cols",
        "road_spacing_km",
        "road_jitter_km",
        "road_drop_fraction",
        "metro_lines",
        "metro_stations",
        "metro_spacing_km",
        "train_lines",
        "train_stations",
        "train_spacing_km",
        "crosslayer_radius_km",
        "antenna_spacing_km",
        "antenna_jitter",
        "interval_s",
        "noise",
        "min_trip_km",
        "start_epoch",
        "check_realism",
    ];

    /// Sets one field from text. Returns `Ok(false)` for keys this config does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value.trim().parse().map_err(|_| format!("bad value '{value}' for {key}"))
        }
        let mut next = self.clone();
        match key {
            "seed" => next.seed = num(key, value)?,
            "center_lat" => next.center_lat = num(key, value)?,
            "center_lon" => next.center_lon = num(key, value)?,
            "road_rows" => next.road_rows = num(key, value)?,
            "road_cols" => next.road_cols = num(key, value)?,
            "road_spacing_km" => next.road_spacing_km = num(key, value)?,
            "road_jitter_km" => next.road_jitter_km = num(key, value)?,
            "road_drop_fraction" => next.road_drop_fraction = num(key, value)?,
            "metro_lines" => next.metro_lines = num(key, value)?,
            "metro_stations" => next.metro_stations = num(key, value)?,
            "metro_spacing_km" => next.metro_spacing_km = num(key, value)?,
            "train_lines" => next.train_lines = num(key, value)?,
            "train_stations" => next.train_stations = num(key, value)?,
            "train_spacing_km" => next.train_spacing_km = num(key, value)?,
            "crosslayer_radius_km" => next.crosslayer_radius_km = num(key, value)?,
            "antenna_spacing_km" => next.antenna_spacing_km = num(key, value)?,
            "antenna_jitter" => next.antenna_jitter = num(key, value)?,
            "interval_s" => next.interval_s = num(key, value)?,
            "noise" => next.noise = num(key, value)?,
            "min_trip_km" => next.min_trip_km = num(key, value)?,
            "start_epoch" => next.start_epoch = num(key, value)?,
            "check_realism" => next.check_realism = num(key, value)?,
            _ => return Ok(false),
        }
        next.validate()?;
        *self = next;
        Ok(true)
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("road_spacing_km", self.road_spacing_km),
            ("metro_spacing_km", self.metro_spacing_km),
            ("train_spacing_km", self.train_spacing_km),
            ("crosslayer_radius_km", self.crosslayer_radius_km),
            ("antenna_spacing_km", self.antenna_spacing_km),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(format!("{k} must be positive"));
        }
        if self.road_rows < 2 || self.road_cols < 2 {
            return Err("road grid needs at least 2 rows and 2 columns".into());
        }
        if (self.metro_lines > 0 && self.metro_stations < 2) || (self.train_lines > 0 && self.train_stations < 2) {
            return Err("a line needs at least 2 stations".into());
        }
        if self.interval_s == 0 {
            return Err("interval_s must be positive".into());
        }
        if !(0.0..=0.5).contains(&self.noise) {
            return Err("noise must lie in [0, 0.5]".into());
        }
        if !(0.0..0.5).contains(&(self.road_jitter_km / self.road_spacing_km)) {
            return Err("road_jitter_km must be below half the road spacing".into());
        }
        if !(0.0..0.5).contains(&self.antenna_jitter) {
            return Err("antenna_jitter must lie in [0, 0.5)".into());
        }
        if !(0.0..1.0).contains(&self.road_drop_fraction) {
            return Err("road_drop_fraction must lie in [0, 1)".into());
        }
        if !(self.min_trip_km >= 0.0) {
            return Err("min_trip_km must be non-negative".into());
        }
        if !LatLon::new(self.center_lat, self.center_lon).is_valid() {
            return Err("center is not a valid position".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub graph: MultilayerGraph,
    pub network: CellularNetwork,
    /// Stations left without a cross-layer edge.
    pub unconnected_stations: Vec<String>,
    /// Seed of the attempt that produced this world.
    pub world_seed: u64,
}

/// The bounding box used for a world's antennas: everything plus a 1 km margin.
pub fn world_bbox(graph: &MultilayerGraph, towers: &[TowerSite]) -> Option<BoundingBox> {
    BoundingBox::enclosing(
        graph.nodes().iter().map(|n| n.position()).chain(towers.iter().map(|t| t.position)),
        1.0,
    )
}

pub fn generate_world(config: &SynthConfig) -> Result<World, SynthError> {
    config.validate().map_err(SynthError::Config)?;
    let mut seeder = ChaCha8Rng::seed_from_u64(config.seed);
    for attempt in 0..MAX_WORLD_ATTEMPTS {
        let world_seed = if attempt == 0 { config.seed } else { seeder.gen() };
        let mut rng = ChaCha8Rng::seed_from_u64(world_seed);
        let graph = build_graph(config, &mut rng)?;
        let (graph, report) = graph.connect_layers(config.crosslayer_radius_km);
        if !graph.is_connected() {
            log::warn!("world attempt {} is disconnected, reseeding", attempt + 1);
            continue;
        }
        if config.check_realism {
            check_realism(&graph)?;
        }
        let towers = antenna_grid(config, &mut rng);
        let bbox = world_bbox(&graph, &towers).expect("world has nodes");
        let network = CellularNetwork::build(towers, bbox)?;
        return Ok(World {
            graph,
            network,
            unconnected_stations: report.unconnected_stations,
            world_seed,
        });
    }
    Err(SynthError::Disconnected(MAX_WORLD_ATTEMPTS))
}

fn check_realism(graph: &MultilayerGraph) -> Result<(), SynthError> {
    for (layer, degree, length) in REFERENCE_LAYER_STATS {
        let view = graph.layer_view(layer);
        if view.edge_count() == 0 {
            continue;
        }
        let row = view.summary().into_iter().find(|r| r.name == layer.as_str()).expect("layer row");
        let within = |got: f64, want: f64| (got - want).abs() <= REALISM_TOLERANCE * want;
        if !within(row.mean_degree, degree) || !within(row.mean_length_km, length) {
            return Err(SynthError::Unrealistic {
                layer,
                detail: format!(
                    "mean degree {:.3} (reference {degree}), mean length {:.3} km (reference {length})",
                    row.mean_degree, row.mean_length_km
                ),
            });
        }
    }
    Ok(())
}

fn jitter(rng: &mut ChaCha8Rng, amount: f64) -> f64 {
    if amount > 0.0 {
        rng.gen_range(-amount..=amount)
    } else {
        0.0
    }
}

fn line_class(index: usize, count: usize) -> EdgeClass {
    if index == count / 2 {
        EdgeClass::RoadHighway
    } else if index % 6 == 0 {
        EdgeClass::RoadPrincipal
    } else if index % 3 == 0 {
        EdgeClass::RoadRegional
    } else {
        EdgeClass::RoadLocal
    }
}

fn build_graph(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<MultilayerGraph, SynthError> {
    let proj = LocalProjection::new(LatLon::new(config.center_lat, config.center_lon));
    let (rows, cols, s) = (config.road_rows, config.road_cols, config.road_spacing_km);
    let half_w = (cols - 1) as f64 * s / 2.0;
    let half_h = (rows - 1) as f64 * s / 2.0;
    let mut nodes = Vec::new();
    let road_id = |r: usize, c: usize| format!("r{r:03}_{c:03}");
    for r in 0..rows {
        for c in 0..cols {
            let x = c as f64 * s - half_w + jitter(rng, config.road_jitter_km);
            let y = r as f64 * s - half_h + jitter(rng, config.road_jitter_km);
            let p = proj.unproject(x, y);
            nodes.push(Node::new(road_id(r, c), p.lat, p.lon, Layer::Road));
        }
    }
    // (a, b, class) on grid positions r * cols + c
    let mut road_edges: Vec<(usize, usize, EdgeClass)> = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = r * cols + c;
            if c + 1 < cols {
                road_edges.push((v, v + 1, line_class(r, rows)));
            }
            if r + 1 < rows {
                road_edges.push((v, v + cols, line_class(c, cols)));
            }
        }
    }
    drop_local_edges(&mut road_edges, rows * cols, config.road_drop_fraction, rng);
    let mut edges: Vec<EdgeSpec> = road_edges
        .iter()
        .map(|&(a, b, class)| EdgeSpec::new(nodes[a].id.clone(), nodes[b].id.clone(), class, None))
        .collect();

    // keep stations half a spacing inside the road lattice so each can reach a road node
    let inside = |x: f64, y: f64| x.abs() <= half_w - s / 2.0 && y.abs() <= half_h - s / 2.0;
    let mut lines = |prefix: &str, count: usize, stations: usize, spacing: f64, hub: (f64, f64), phase: f64, layer: Layer, nodes: &mut Vec<Node>, edges: &mut Vec<EdgeSpec>| {
        if count == 0 {
            return;
        }
        let hub_id = format!("{prefix}_hub");
        let p = proj.unproject(hub.0, hub.1);
        nodes.push(Node::new(hub_id.clone(), p.lat, p.lon, layer));
        let half = (stations / 2) as i64;
        for line in 0..count {
            let theta = PI * line as f64 / count as f64 + phase;
            let (dx, dy) = (theta.cos(), theta.sin());
            let mut prev: Option<String> = None;
            for k in -half..=(stations as i64 - 1 - half) {
                let id = if k == 0 {
                    hub_id.clone()
                } else {
                    let x = hub.0 + dx * spacing * k as f64 + jitter(rng, spacing * 0.05);
                    let y = hub.1 + dy * spacing * k as f64 + jitter(rng, spacing * 0.05);
                    if !inside(x, y) {
                        continue;
                    }
                    let id = format!("{prefix}{line}_{:02}", k + half);
                    let p = proj.unproject(x, y);
                    nodes.push(Node::new(id.clone(), p.lat, p.lon, layer));
                    id
                };
                if let Some(prev) = prev {
                    edges.push(EdgeSpec::new(prev, id.clone(), EdgeClass::default_for(layer), None));
                }
                prev = Some(id);
            }
        }
    };
    lines("m", config.metro_lines, config.metro_stations, config.metro_spacing_km, (0.0, 0.0), 0.3, Layer::Metro, &mut nodes, &mut edges);
    let train_hub = ((3.0 * s).min(half_w / 2.0), (-2.0 * s).max(-half_h / 2.0));
    lines("t", config.train_lines, config.train_stations, config.train_spacing_km, train_hub, 0.9, Layer::Train, &mut nodes, &mut edges);
    Ok(MultilayerGraph::new(nodes, edges)?)
}

/// Removes about `fraction` of the local edges, skipping any removal that
/// would leave an endpoint with degree below 2 or split the lattice.
fn drop_local_edges(edges: &mut Vec<(usize, usize, EdgeClass)>, n: usize, fraction: f64, rng: &mut ChaCha8Rng) {
    if fraction <= 0.0 {
        return;
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b, _) in edges.iter() {
        adj[a].push(b);
        adj[b].push(a);
    }
    let connected_without = |adj: &Vec<Vec<usize>>, a: usize, b: usize| {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([a]);
        seen[a] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if (v, w) == (a, b) || (v, w) == (b, a) || seen[w] {
                    continue;
                }
                if w == b {
                    return true;
                }
                seen[w] = true;
                queue.push_back(w);
            }
        }
        false
    };
    let mut keep = vec![true; edges.len()];
    for (k, &(a, b, class)) in edges.iter().enumerate() {
        let roll: f64 = rng.gen();
        if class != EdgeClass::RoadLocal || roll >= fraction {
            continue;
        }
        if adj[a].len() <= 2 || adj[b].len() <= 2 || !connected_without(&adj, a, b) {
            continue;
        }
        adj[a].retain(|&w| w != b);
        adj[b].retain(|&w| w != a);
        keep[k] = false;
    }
    let mut k = 0;
    edges.retain(|_| {
        k += 1;
        keep[k - 1]
    });
}

fn antenna_grid(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<TowerSite> {
    let proj = LocalProjection::new(LatLon::new(config.center_lat, config.center_lon));
    let s = config.antenna_spacing_km;
    let half_w = (config.road_cols - 1) as f64 * config.road_spacing_km / 2.0;
    let half_h = (config.road_rows - 1) as f64 * config.road_spacing_km / 2.0;
    // one extra ring beyond the lattice keeps the unbounded hull cells off the roads
    let nx = (2.0 * half_w / s).ceil() as usize + 3;
    let ny = (2.0 * half_h / s).ceil() as usize + 3;
    let (x0, y0) = (-((nx - 1) as f64) * s / 2.0, -((ny - 1) as f64) * s / 2.0);
    let mut towers = Vec::with_capacity(nx * ny);
    for r in 0..ny {
        for c in 0..nx {
            let x = x0 + c as f64 * s + jitter(rng, config.antenna_jitter * s);
            let y = y0 + r as f64 * s + jitter(rng, config.antenna_jitter * s);
            let p = proj.unproject(x, y);
            towers.push(TowerSite::new(format!("a{r:03}_{c:03}"), p.lat, p.lon));
        }
    }
    towers
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trip {
    pub truth: GroundTruthPath,
    pub trajectory: CellularTrajectory,
    pub duration_s: f64,
    pub length_km: f64,
}

/// Drives the least travel-time route from `src` to `dst` and observes it
/// every `interval_s` seconds and once more on arrival.
#[allow(clippy::too_many_arguments)]
pub fn simulate_trip(
    graph: &MultilayerGraph,
    network: &CellularNetwork,
    trip_id: &str,
    src: usize,
    dst: usize,
    start: i64,
    config: &SynthConfig,
    seed: u64,
) -> Result<Trip, SynthError> {
    let unreachable = || SynthError::Unreachable(graph.node(src).id.clone(), graph.node(dst).id.clone());
    let route = graph
        .route_with_target_distances(src, dst, &graph.dijkstra(dst))
        .ok_or_else(unreachable)?;
    let path = route.nodes;
    // arrival time (s) at each path node
    let mut arrival = vec![0.0; path.len()];
    for k in 1..path.len() {
        let e = graph.edge_between(path[k - 1], path[k]).expect("route follows edges");
        arrival[k] = arrival[k - 1] + e.cost() * 3600.0;
    }
    let duration = arrival[path.len() - 1];
    let interval = config.interval_s as f64;
    if duration <= interval {
        return Err(SynthError::TripTooShort {
            duration_s: duration,
            interval_s: config.interval_s,
        });
    }
    let mut times: Vec<f64> = (0..).map(|k| k as f64 * interval).take_while(|&t| t < duration).collect();
    times.push(duration);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut observations = Vec::with_capacity(times.len());
    let mut skeleton_indices = Vec::with_capacity(times.len());
    let mut seg = 0;
    for &t in &times {
        while seg + 2 < path.len() && arrival[seg + 1] <= t {
            seg += 1;
        }
        let (a, b) = (graph.position(path[seg]), graph.position(path[seg + 1]));
        let span = arrival[seg + 1] - arrival[seg];
        let f = if span > 0.0 { ((t - arrival[seg]) / span).clamp(0.0, 1.0) } else { 1.0 };
        let here = LatLon::new(a.lat + f * (b.lat - a.lat), a.lon + f * (b.lon - a.lon));
        let nearest = network.nearest_towers(here, 2);
        let flip: f64 = rng.gen();
        let tower = if flip < config.noise && nearest.len() > 1 { nearest[1] } else { nearest[0] };
        observations.push(Observation {
            timestamp: start + t.round() as i64,
            tower_id: network.tower(tower).id.clone(),
        });
        skeleton_indices.push(if t - arrival[seg] <= arrival[seg + 1] - t { seg } else { seg + 1 });
    }
    // rounding can merge the arrival observation into the previous one
    observations.dedup_by(|b, a| b.timestamp == a.timestamp);
    skeleton_indices.truncate(observations.len());
    let trajectory = CellularTrajectory::new(trip_id, observations).map_err(|e| SynthError::Config(e.to_string()))?;
    Ok(Trip {
        truth: GroundTruthPath {
            trajectory_id: trip_id.to_string(),
            skeleton_indices,
            nodes: path.clone(),
        },
        trajectory,
        duration_s: duration,
        length_km: route_length(graph, &path),
    })
}

fn route_length(graph: &MultilayerGraph, path: &[usize]) -> f64 {
    path.windows(2)
        .map(|w| graph.edge_between(w[0], w[1]).map_or(0.0, |e| e.length_km))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub trajectories: Vec<CellularTrajectory>,
    pub truths: Vec<GroundTruthPath>,
}

/// Simulates `trips` trips between road nodes at least `min_trip_km` apart.
/// Each trip gets its own seed drawn from `seed`, so trips are generated in parallel.
pub fn generate_corpus(world: &World, config: &SynthConfig, trips: usize, seed: u64) -> Result<Corpus, SynthError> {
    config.validate().map_err(SynthError::Config)?;
    let graph = &world.graph;
    let roads: Vec<usize> = (0..graph.node_count()).filter(|&v| graph.node(v).layer == Layer::Road).collect();
    if roads.len() < 2 {
        return Err(SynthError::NoEndpoints(0));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..trips).map(|_| master.gen()).collect();
    let made: Vec<Trip> = seeds
        .par_iter()
        .enumerate()
        .map(|(k, &trip_seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(trip_seed);
            let id = format!("trip{k:04}");
            let start = config.start_epoch + 86_400 * k as i64;
            for _ in 0..MAX_ENDPOINT_ATTEMPTS {
                let src = roads[rng.gen_range(0..roads.len())];
                let dst = roads[rng.gen_range(0..roads.len())];
                let noise_seed: u64 = rng.gen();
                if graph.distance(src, dst) < config.min_trip_km.max(f64::MIN_POSITIVE) {
                    continue;
                }
                match simulate_trip(graph, &world.network, &id, src, dst, start, config, noise_seed) {
                    Ok(trip) => return Ok(trip),
                    Err(SynthError::TripTooShort { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(SynthError::NoEndpoints(MAX_ENDPOINT_ATTEMPTS))
        })
        .collect::<Result<_, _>>()?;
    let (trajectories, truths) = made.into_iter().map(|t| (t.trajectory, t.truth)).unzip();
    Ok(Corpus { trajectories, truths })
}

/// Exhaustive search over every candidate sequence of a lattice, scored
/// exactly like the decoder. Among equal scores the sequence whose node
/// indices are smallest, compared from the last step backwards, wins.
pub fn brute_force(lattice: &Lattice) -> Result<(Vec<usize>, f64), MapError> {
    let sizes: Vec<usize> = lattice.candidates.iter().map(|c| c.len()).collect();
    let space = sizes.iter().map(|&n| n as u128).product::<u128>();
    if space > BRUTE_FORCE_BUDGET {
        return Err(MapError::SearchSpaceTooLarge {
            size: space,
            budget: BRUTE_FORCE_BUDGET,
        });
    }
    if let Some(step) = sizes.iter().position(|&n| n == 0) {
        return Err(MapError::ZeroLikelihood { step });
    }
    let rev_nodes = |choice: &[usize]| -> Vec<usize> { lattice.nodes_of(choice).into_iter().rev().collect() };
    let mut choice = vec![0usize; sizes.len()];
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        let s = lattice.sequence_score(&choice);
        if s > f64::NEG_INFINITY {
            let better = match &best {
                None => true,
                Some((b, bs)) => s > *bs || (s == *bs && rev_nodes(&choice) < rev_nodes(b)),
            };
            if better {
                best = Some((choice.clone(), s));
            }
        }
        // odometer increment
        let mut t = sizes.len();
        loop {
            if t == 0 {
                return best.ok_or_else(|| MapError::ZeroLikelihood { step: first_dead_step(lattice) });
            }
            t -= 1;
            choice[t] += 1;
            if choice[t] < sizes[t] {
                break;
            }
            choice[t] = 0;
        }
    }
}

/// First step at which no candidate can be reached with a finite score.
fn first_dead_step(lattice: &Lattice) -> usize {
    let mut alive: Vec<bool> = lattice.log_emission[0].iter().map(|e| e.is_finite()).collect();
    if !alive.iter().any(|&a| a) {
        return 0;
    }
    for t in 1..lattice.steps() {
        alive = (0..lattice.candidates[t].len())
            .map(|j| {
                lattice.log_emission[t][j].is_finite()
                    && (0..alive.len()).any(|i| alive[i] && lattice.log_transition[t][i][j].is_finite())
            })
            .collect();
        if !alive.iter().any(|&a| a) {
            return t;
        }
    }
    lattice.steps()
}

pub fn brute_force_skeleton(
    graph: &MultilayerGraph,
    network: &CellularNetwork,
    traj: &CellularTrajectory,
    params: &MapperParams,
    model: TransitionModel,
) -> Result<SkeletonPath, MapError> {
    let lattice = crate::mapper::build_lattice(graph, network, traj, params, model)?;
    let (choice, score) = brute_force(&lattice)?;
    Ok(SkeletonPath {
        trajectory_id: traj.id.clone(),
        nodes: lattice.nodes_of(&choice),
        log_score: Some(score),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapper::{viterbi, Candidate};

    fn small() -> SynthConfig {
        SynthConfig {
            road_rows: 12,
            road_cols: 12,
            metro_stations: 7,
            train_stations: 4,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn default_world_is_realistic_and_connected() {
        let world = generate_world(&SynthConfig::default()).unwrap();
        assert!(world.graph.is_connected());
        for layer in [Layer::Metro, Layer::Train] {
            let view = world.graph.layer_view(layer);
            assert!(view.node_count() > 0);
            let deg = view.summary().into_iter().find(|r| r.name == layer.as_str()).unwrap().mean_degree;
            assert!((1.2..=3.5).contains(&deg), "{layer} degree {deg}");
        }
        assert!(world.unconnected_stations.is_empty());
        for n in world.graph.nodes().iter().filter(|n| n.layer.is_station()) {
            let idx = world.graph.index_of(&n.id).unwrap();
            let cross = world.graph.neighbors(idx).iter().any(|&(w, _)| world.graph.node(w).layer != n.layer);
            assert!(cross, "station {} has no cross-layer edge", n.id);
        }
    }

    #[test]
    fn worlds_are_deterministic() {
        let a = generate_world(&small()).unwrap();
        let b = generate_world(&small()).unwrap();
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.network.towers(), b.network.towers());
        let c = generate_world(&SynthConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(a.graph, c.graph);
    }

    #[test]
    fn config_keys_and_validation() {
        let mut c = SynthConfig::default();
        for key in SynthConfig::KEYS {
            let current = serde_json::to_value(&c).unwrap()[key].to_string();
            assert_eq!(c.set(key, &current), Ok(true), "{key}");
        }
        assert_eq!(c.set("tau_km", "3"), Ok(false));
        assert!(c.set("noise", "0.7").is_err());
        assert_eq!(c.noise, 0.15);
        assert!(c.set("interval_s", "0").is_err());
        assert!(c.set("road_rows", "x").is_err());
    }

    #[test]
    fn trips_are_observed_sparsely_and_deterministically() {
        let config = small();
        let world = generate_world(&config).unwrap();
        let a = generate_corpus(&world, &config, 6, 3).unwrap();
        let b = generate_corpus(&world, &config, 6, 3).unwrap();
        assert_eq!(a, b);
        for (traj, truth) in a.trajectories.iter().zip(&a.truths) {
            assert!(traj.len() >= 2);
            assert_eq!(truth.skeleton_indices.len(), traj.len());
            assert!(truth.nodes.windows(2).all(|w| world.graph.are_adjacent(w[0], w[1])));
            assert!(truth.skeleton_indices.windows(2).all(|w| w[0] <= w[1]));
            assert!(world.graph.distance(truth.nodes[0], *truth.nodes.last().unwrap()) >= config.min_trip_km);
        }
    }

    #[test]
    fn observation_count_follows_duration() {
        let config = SynthConfig::default();
        let world = generate_world(&config).unwrap();
        let g = &world.graph;
        let src = g.index_of("r000_000").unwrap();
        let dst = g.index_of("r029_029").unwrap();
        let trip = simulate_trip(g, &world.network, "x", src, dst, 0, &config, 1).unwrap();
        let expected = (trip.duration_s / 900.0).ceil() as usize + 1;
        assert_eq!(trip.trajectory.len(), expected);
        let short = g.index_of("r000_001").unwrap();
        assert!(matches!(
            simulate_trip(g, &world.network, "y", src, short, 0, &config, 1),
            Err(SynthError::TripTooShort { .. })
        ));
    }

    fn cand(node: usize, emission: f64) -> Candidate {
        Candidate {
            node,
            emission,
            distance_km: 0.0,
        }
    }

    #[test]
    fn two_by_two_enumeration() {
        // emissions: step0 {a:1, b:0.5}, step1 {c:0.5, d:1}; transitions favour b->c
        let tr = |a: usize, b: usize| match (a, b) {
            (0, 2) => 1.0,
            (0, 3) => 1.0,
            (1, 2) => 8.0,
            _ => 1.0,
        };
        let lattice = Lattice::from_parts(vec![vec![cand(0, 1.0), cand(1, 0.5)], vec![cand(2, 0.5), cand(3, 1.0)]], tr);
        // a-c 0.5, a-d 1, b-c 2, b-d 0.5
        let (choice, score) = brute_force(&lattice).unwrap();
        assert_eq!(lattice.nodes_of(&choice), vec![1, 2]);
        assert!((score - 2f64.ln()).abs() < 1e-12);
        assert_eq!(viterbi(&lattice).unwrap(), (choice, score));
    }

    #[test]
    fn ties_resolve_like_the_decoder() {
        let lattice = Lattice::from_parts(
            vec![vec![cand(5, 1.0), cand(2, 1.0)], vec![cand(9, 1.0), cand(4, 1.0)]],
            |_, _| 1.0,
        );
        let (choice, _) = brute_force(&lattice).unwrap();
        assert_eq!(lattice.nodes_of(&choice), vec![2, 4]);
        assert_eq!(viterbi(&lattice).unwrap().0, choice);
    }

    #[test]
    fn forced_and_oversized_lattices() {
        let forced = Lattice::from_parts(vec![vec![cand(1, 0.3)], vec![cand(0, 0.2)], vec![cand(4, 1.0)]], |_, _| 2.0);
        assert_eq!(brute_force(&forced).unwrap().0, vec![0, 0, 0]);
        let wide: Vec<Vec<Candidate>> = (0..7).map(|_| (0..8).map(|i| cand(i, 1.0)).collect()).collect();
        let big = Lattice::from_parts(wide, |_, _| 1.0);
        assert!(matches!(brute_force(&big), Err(MapError::SearchSpaceTooLarge { .. })));
        let dead = Lattice::from_parts(vec![vec![cand(0, 1.0)], vec![cand(1, 1.0)]], |_, _| 0.0);
        assert!(matches!(brute_force(&dead), Err(MapError::ZeroLikelihood { step: 1 })));
    }
}
