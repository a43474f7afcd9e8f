//! Map-matching of sparse cellular trajectories onto multilayer
//! (road, metro, train) transportation graphs.
//!
//! The pipeline: build a [`graph::MultilayerGraph`], tessellate the antennas
//! into a [`cellnet::CellularNetwork`], decode each trajectory with
//! [`mapper::map_trajectory`] and score the result with [`eval`].

pub mod cellnet;
pub mod corpus;
pub mod entropy;
pub mod eval;
pub mod geo;
pub mod graph;
pub mod mapper;
pub mod synth;

pub use cellnet::{CellTower, CellularNetwork, TowerSite};
pub use geo::{BoundingBox, DistanceMetric, LatLon};
pub use graph::{EdgeClass, Layer, MultilayerGraph, Node};
pub use mapper::{Algorithm, CellularTrajectory, MapperParams, NodePath, Observation};
