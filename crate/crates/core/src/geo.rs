use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// A WGS84 position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }
}

/// Great-circle distance in kilometers (haversine).
pub fn geodesic_distance(a: LatLon, b: LatLon) -> f64 {
    if a == b {
        return 0.0;
    }
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Equirectangular approximation about the mean latitude of the two points.
pub fn equirectangular_distance(a: LatLon, b: LatLon) -> f64 {
    let mean_lat = ((a.lat + b.lat) / 2.0).to_radians();
    let x = (b.lon - a.lon).to_radians() * mean_lat.cos();
    let y = (b.lat - a.lat).to_radians();
    EARTH_RADIUS_KM * x.hypot(y)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    #[default]
    Haversine,
    Equirectangular,
}

impl DistanceMetric {
    pub fn distance(self, a: LatLon, b: LatLon) -> f64 {
        match self {
            DistanceMetric::Haversine => geodesic_distance(a, b),
            DistanceMetric::Equirectangular => equirectangular_distance(a, b),
        }
    }
}

impl FromStr for DistanceMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "haversine" => Ok(DistanceMetric::Haversine),
            "equirectangular" => Ok(DistanceMetric::Equirectangular),
            other => Err(format!("unknown distance metric '{other}' (haversine|equirectangular)")),
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceMetric::Haversine => "haversine",
            DistanceMetric::Equirectangular => "equirectangular",
        })
    }
}

/// Planar kilometer coordinates around a fixed origin (x east, y north).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalProjection {
    origin: LatLon,
    cos_lat0: f64,
}

impl LocalProjection {
    pub fn new(origin: LatLon) -> Self {
        Self {
            origin,
            cos_lat0: origin.lat.to_radians().cos(),
        }
    }

    pub fn origin(&self) -> LatLon {
        self.origin
    }

    pub fn project(&self, p: LatLon) -> (f64, f64) {
        let x = EARTH_RADIUS_KM * (p.lon - self.origin.lon).to_radians() * self.cos_lat0;
        let y = EARTH_RADIUS_KM * (p.lat - self.origin.lat).to_radians();
        (x, y)
    }

    pub fn unproject(&self, x: f64, y: f64) -> LatLon {
        let lat = self.origin.lat + (y / EARTH_RADIUS_KM).to_degrees();
        let lon = self.origin.lon + (x / (EARTH_RADIUS_KM * self.cos_lat0)).to_degrees();
        LatLon { lat, lon }
    }
}

/// Axis-aligned lat/lon rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn center(&self) -> LatLon {
        LatLon::new(
            (self.min_lat + self.max_lat) / 2.0,
            (self.min_lon + self.max_lon) / 2.0,
        )
    }

    pub fn strictly_contains(&self, p: LatLon) -> bool {
        p.lat > self.min_lat && p.lat < self.max_lat && p.lon > self.min_lon && p.lon < self.max_lon
    }

    /// Smallest box holding every point, grown by `margin_km` on each side.
    pub fn enclosing<I: IntoIterator<Item = LatLon>>(points: I, margin_km: f64) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut bb = BoundingBox {
            min_lat: first.lat,
            min_lon: first.lon,
            max_lat: first.lat,
            max_lon: first.lon,
        };
        for p in it {
            bb.min_lat = bb.min_lat.min(p.lat);
            bb.max_lat = bb.max_lat.max(p.lat);
            bb.min_lon = bb.min_lon.min(p.lon);
            bb.max_lon = bb.max_lon.max(p.lon);
        }
        let dlat = (margin_km / EARTH_RADIUS_KM).to_degrees();
        let cos = bb.center().lat.to_radians().cos().max(1e-6);
        let dlon = dlat / cos;
        bb.min_lat -= dlat;
        bb.max_lat += dlat;
        bb.min_lon -= dlon;
        bb.max_lon += dlon;
        Some(bb)
    }
}

impl FromStr for BoundingBox {
    type Err = String;

    /// `min_lat,min_lon,max_lat,max_lon`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad bbox value '{p}': {e}")))
            .collect::<Result<_, _>>()?;
        if parts.len() != 4 {
            return Err("bbox needs four values: min_lat,min_lon,max_lat,max_lon".into());
        }
        let bb = BoundingBox {
            min_lat: parts[0],
            min_lon: parts[1],
            max_lat: parts[2],
            max_lon: parts[3],
        };
        if !(bb.min_lat < bb.max_lat && bb.min_lon < bb.max_lon) {
            return Err("bbox minimums must be below maximums".into());
        }
        Ok(bb)
    }
}
