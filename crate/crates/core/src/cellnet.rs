//! Cellular antenna network and its Voronoi tessellation.
//!
//! Cells are computed in a local equirectangular projection centred on the
//! bounding box, by clipping the box against the perpendicular bisector of
//! every nearby tower. Each polygon edge remembers which bisector produced it,
//! which gives Voronoi adjacency for free.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;

use crate::geo::{BoundingBox, DistanceMetric, LatLon, LocalProjection};
use crate::graph::{check_header, record_line, GraphError, MultilayerGraph};

/// Polygon edges shorter than this (km, projected) do not make two cells neighbours.
const MIN_SHARED_EDGE_KM: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CellNetError {
    #[error("need at least 3 towers, got {0}")]
    TooFewTowers(usize),
    #[error("all towers are collinear")]
    Collinear,
    #[error("tower '{0}' is not strictly inside the bounding box")]
    OutsideBbox(String),
    #[error("duplicate tower id '{0}'")]
    DuplicateTower(String),
    #[error("towers '{0}' and '{1}' share a location")]
    CoincidentTowers(String, String),
    #[error("no pair of neighbouring towers")]
    NoAdjacentPairs,
    #[error("quantile {0} outside (0, 1]")]
    BadQuantile(f64),
    #[error("unknown tower '{0}'")]
    UnknownTower(String),
    #[error(transparent)]
    Format(#[from] GraphError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellTower {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    /// Distance to the farthest vertex of the tower's clipped cell (km).
    pub r_max: f64,
}

impl CellTower {
    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

/// Tower position as listed in a towers file.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerSite {
    pub id: String,
    pub position: LatLon,
}

impl TowerSite {
    pub fn new(id: impl Into<String>, lat: f64, lon: f64) -> Self {
        Self {
            id: id.into(),
            position: LatLon::new(lat, lon),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CellularNetwork {
    towers: Vec<CellTower>,
    index: HashMap<String, usize>,
    cells: Vec<Vec<LatLon>>,
    neighbors: Vec<Vec<usize>>,
    bbox: BoundingBox,
    metric: DistanceMetric,
}

/// Polygon vertex plus the label of the edge leaving it (`None` = bbox side).
#[derive(Debug, Clone, Copy)]
struct Vertex {
    x: f64,
    y: f64,
    label: Option<usize>,
}

/// Keeps the part of `poly` on `site`'s side of the bisector with `other`.
fn clip(poly: &[Vertex], site: (f64, f64), other: (f64, f64), label: usize) -> Vec<Vertex> {
    // inside: (p - m) . (other - site) <= 0 with m the midpoint
    let (nx, ny) = (other.0 - site.0, other.1 - site.1);
    let (mx, my) = ((site.0 + other.0) / 2.0, (site.1 + other.1) / 2.0);
    let side = |v: &Vertex| (v.x - mx) * nx + (v.y - my) * ny;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (sa, sb) = (side(&a), side(&b));
        let crossing = || {
            let t = sa / (sa - sb);
            (a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
        };
        match (sa <= 0.0, sb <= 0.0) {
            (true, true) => out.push(a),
            (true, false) => {
                out.push(a);
                let (x, y) = crossing();
                out.push(Vertex { x, y, label: Some(label) });
            }
            (false, true) => {
                let (x, y) = crossing();
                out.push(Vertex { x, y, label: a.label });
            }
            (false, false) => {}
        }
    }
    out
}

/// Uniform bucket grid over projected tower positions.
struct Buckets {
    origin: (f64, f64),
    size: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<usize>>,
}

impl Buckets {
    fn new(pts: &[(f64, f64)]) -> Self {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let (w, h) = ((x1 - x0).max(1e-9), (y1 - y0).max(1e-9));
        // about one tower per bucket, at most 1024 buckets a side
        let size = (w * h / pts.len() as f64).sqrt().max(w.max(h) / 1024.0);
        let nx = (w / size) as usize + 1;
        let ny = (h / size) as usize + 1;
        let mut cells = vec![Vec::new(); nx * ny];
        let mut grid = Self { origin: (x0, y0), size, nx, ny, cells: Vec::new() };
        for (i, &p) in pts.iter().enumerate() {
            let (cx, cy) = grid.cell_of(p);
            cells[cy * nx + cx].push(i);
        }
        grid.cells = cells;
        grid
    }

    fn cell_of(&self, p: (f64, f64)) -> (usize, usize) {
        let cx = (((p.0 - self.origin.0) / self.size).max(0.0) as usize).min(self.nx - 1);
        let cy = (((p.1 - self.origin.1) / self.size).max(0.0) as usize).min(self.ny - 1);
        (cx, cy)
    }

    fn max_ring(&self) -> usize {
        self.nx.max(self.ny)
    }

    /// Towers in buckets at Chebyshev distance exactly `ring` from `p`'s bucket.
    fn ring(&self, p: (f64, f64), ring: usize) -> impl Iterator<Item = usize> + '_ {
        let (cx, cy) = self.cell_of(p);
        let (cx, cy, r) = (cx as i64, cy as i64, ring as i64);
        (cy - r..=cy + r)
            .flat_map(move |y| (cx - r..=cx + r).map(move |x| (x, y)))
            .filter(move |&(x, y)| (x - cx).abs() == r || (y - cy).abs() == r)
            .filter(|&(x, y)| x >= 0 && y >= 0 && (x as usize) < self.nx && (y as usize) < self.ny)
            .flat_map(|(x, y)| self.cells[y as usize * self.nx + x as usize].iter().copied())
    }
}

impl CellularNetwork {
    pub fn build(sites: Vec<TowerSite>, bbox: BoundingBox) -> Result<Self, CellNetError> {
        Self::build_with_metric(sites, bbox, DistanceMetric::default())
    }

    pub fn build_with_metric(
        mut sites: Vec<TowerSite>,
        bbox: BoundingBox,
        metric: DistanceMetric,
    ) -> Result<Self, CellNetError> {
        if sites.len() < 3 {
            return Err(CellNetError::TooFewTowers(sites.len()));
        }
        sites.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = sites.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(CellNetError::DuplicateTower(w[0].id.clone()));
        }
        if let Some(s) = sites.iter().find(|s| !bbox.strictly_contains(s.position)) {
            return Err(CellNetError::OutsideBbox(s.id.clone()));
        }
        let proj = LocalProjection::new(bbox.center());
        let pts: Vec<(f64, f64)> = sites.iter().map(|s| proj.project(s.position)).collect();
        {
            let mut seen: HashMap<(u64, u64), usize> = HashMap::new();
            for (i, p) in pts.iter().enumerate() {
                if let Some(&j) = seen.get(&(p.0.to_bits(), p.1.to_bits())) {
                    return Err(CellNetError::CoincidentTowers(sites[j].id.clone(), sites[i].id.clone()));
                }
                seen.insert((p.0.to_bits(), p.1.to_bits()), i);
            }
        }
        let (ox, oy) = pts[0];
        let far = pts
            .iter()
            .enumerate()
            .max_by(|a, b| {
                let da = (a.1 .0 - ox).hypot(a.1 .1 - oy);
                let db = (b.1 .0 - ox).hypot(b.1 .1 - oy);
                da.total_cmp(&db).then(b.0.cmp(&a.0))
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (dx, dy) = (pts[far].0 - ox, pts[far].1 - oy);
        let span = dx.hypot(dy);
        let non_collinear = pts
            .iter()
            .any(|p| ((p.0 - ox) * dy - (p.1 - oy) * dx).abs() > 1e-9 * span.max(1.0) * span.max(1.0));
        if !non_collinear {
            return Err(CellNetError::Collinear);
        }

        let (x0, y0) = proj.project(LatLon::new(bbox.min_lat, bbox.min_lon));
        let (x1, y1) = proj.project(LatLon::new(bbox.max_lat, bbox.max_lon));
        let square = [
            Vertex { x: x0, y: y0, label: None },
            Vertex { x: x1, y: y0, label: None },
            Vertex { x: x1, y: y1, label: None },
            Vertex { x: x0, y: y1, label: None },
        ];

        let grid = Buckets::new(&pts);
        let mut towers = Vec::with_capacity(sites.len());
        let mut cells = Vec::with_capacity(sites.len());
        let mut neighbor_sets = vec![BTreeSet::new(); sites.len()];
        for (i, site) in sites.iter().enumerate() {
            let p = pts[i];
            let mut poly = square.to_vec();
            let mut reach = poly.iter().map(|v| (v.x - p.0).hypot(v.y - p.1)).fold(0.0, f64::max);
            for ring in 0.. {
                let mut near: Vec<(f64, usize)> = grid
                    .ring(p, ring)
                    .filter(|&j| j != i)
                    .map(|j| ((pts[j].0 - p.0).hypot(pts[j].1 - p.1), j))
                    .collect();
                near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                for (d, j) in near {
                    // a bisector farther than the farthest vertex cannot cut the cell
                    if d / 2.0 > reach {
                        break;
                    }
                    poly = clip(&poly, p, pts[j], j);
                    reach = poly.iter().map(|v| (v.x - p.0).hypot(v.y - p.1)).fold(0.0, f64::max);
                }
                // everything beyond this ring is at least ring * size away
                if ring >= grid.max_ring() || ring as f64 * grid.size / 2.0 > reach {
                    break;
                }
            }
            for k in 0..poly.len() {
                let a = poly[k];
                let b = poly[(k + 1) % poly.len()];
                if let Some(j) = a.label {
                    if (b.x - a.x).hypot(b.y - a.y) > MIN_SHARED_EDGE_KM {
                        neighbor_sets[i].insert(j);
                        neighbor_sets[j].insert(i);
                    }
                }
            }
            let vertices: Vec<LatLon> = poly.iter().map(|v| proj.unproject(v.x, v.y)).collect();
            let r_max = vertices
                .iter()
                .map(|&v| metric.distance(site.position, v))
                .fold(0.0, f64::max);
            towers.push(CellTower {
                id: site.id.clone(),
                lat: site.position.lat,
                lon: site.position.lon,
                r_max,
            });
            cells.push(vertices);
        }
        let index = towers.iter().enumerate().map(|(i, t)| (t.id.clone(), i)).collect();
        Ok(Self {
            towers,
            index,
            cells,
            neighbors: neighbor_sets.into_iter().map(|s| s.into_iter().collect()).collect(),
            bbox,
            metric,
        })
    }

    /// Reads a towers file and builds the network.
    pub fn load<R: Read>(src: R, bbox: BoundingBox) -> Result<Self, CellNetError> {
        Self::build(read_towers(src)?, bbox)
    }

    pub fn towers(&self) -> &[CellTower] {
        &self.towers
    }

    pub fn tower(&self, idx: usize) -> &CellTower {
        &self.towers[idx]
    }

    pub fn len(&self) -> usize {
        self.towers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.towers.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn tower_by_id(&self, id: &str) -> Result<&CellTower, CellNetError> {
        self.index_of(id)
            .map(|i| &self.towers[i])
            .ok_or_else(|| CellNetError::UnknownTower(id.to_string()))
    }

    pub fn cell(&self, idx: usize) -> &[LatLon] {
        &self.cells[idx]
    }

    pub fn neighbors(&self, idx: usize) -> &[usize] {
        &self.neighbors[idx]
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    /// Distances between every pair of Voronoi-adjacent towers, ascending.
    pub fn neighbor_distances(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (i, ns) in self.neighbors.iter().enumerate() {
            for &j in ns.iter().filter(|&&j| j > i) {
                out.push(self.metric.distance(self.towers[i].position(), self.towers[j].position()));
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }

    /// Nearest-rank quantile of neighbouring-tower distances.
    pub fn neighbor_distance_quantile(&self, q: f64) -> Result<f64, CellNetError> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(CellNetError::BadQuantile(q));
        }
        let d = self.neighbor_distances();
        if d.is_empty() {
            return Err(CellNetError::NoAdjacentPairs);
        }
        let rank = ((q * d.len() as f64).ceil() as usize).clamp(1, d.len());
        Ok(d[rank - 1])
    }

    /// Towers within `radius_km` of `point`, nearest first (ties by id).
    pub fn towers_near(&self, point: LatLon, radius_km: f64) -> Vec<usize> {
        let mut hits: Vec<(f64, usize)> = self
            .towers
            .iter()
            .enumerate()
            .map(|(i, t)| (self.metric.distance(point, t.position()), i))
            .filter(|&(d, _)| d <= radius_km)
            .collect();
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        hits.into_iter().map(|(_, i)| i).collect()
    }

    /// The `n` nearest towers to `point`, ties by id.
    pub fn nearest_towers(&self, point: LatLon, n: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = self
            .towers
            .iter()
            .enumerate()
            .map(|(i, t)| (self.metric.distance(point, t.position()), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(n).map(|(_, i)| i).collect()
    }

    /// Graph nodes that sit exactly on a tower location, as (tower id, node id).
    pub fn coincident_nodes(&self, graph: &MultilayerGraph) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for t in &self.towers {
            for n in graph.nodes() {
                if n.lat == t.lat && n.lon == t.lon {
                    out.push((t.id.clone(), n.id.clone()));
                }
            }
        }
        out
    }

    /// Logs a warning per coincident tower/node pair and returns how many there were.
    pub fn warn_coincident_nodes(&self, graph: &MultilayerGraph) -> usize {
        let hits = self.coincident_nodes(graph);
        for (t, n) in &hits {
            log::warn!("tower {t} coincides with graph node {n}");
        }
        hits.len()
    }

    pub fn write_towers<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "id,lat,lon")?;
        for t in &self.towers {
            writeln!(out, "{},{},{}", t.id, t.lat, t.lon)?;
        }
        Ok(())
    }

    /// One line per tower: `id,r_max,lon lat;lon lat;...`.
    pub fn write_voronoi<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "id,r_max,vertices")?;
        for (t, cell) in self.towers.iter().zip(&self.cells) {
            let verts: Vec<String> = cell.iter().map(|v| format!("{} {}", v.lon, v.lat)).collect();
            writeln!(out, "{},{},{}", t.id, t.r_max, verts.join(";"))?;
        }
        Ok(())
    }
}

/// Reads `id,lat,lon` records.
pub fn read_towers<R: Read>(src: R) -> Result<Vec<TowerSite>, CellNetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(src);
    check_header(&mut rdr, &["id", "lat", "lon"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize, what: &str| {
            rec[i].parse::<f64>().map_err(|e| GraphError::Malformed {
                line: record_line(&rec),
                message: format!("bad {what} '{}': {e}", &rec[i]),
            })
        };
        out.push(TowerSite::new(&rec[0], num(1, "lat")?, num(2, "lon")?));
    }
    Ok(out)
}
