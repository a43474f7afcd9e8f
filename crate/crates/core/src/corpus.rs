//! Text formats for trajectories, mapped paths and ground truth.
//!
//! Trajectories: `trajectory_id,timestamp,tower_id`.
//! Paths and node truth: `trajectory_id,seq_index,node_id,is_skeleton`.
//! GPS truth: `trajectory_id,timestamp,lat,lon`.
//!
//! Rows of one trajectory must be contiguous. Trajectories keep the order in
//! which they first appear.

use std::io::{Read, Write};

use thiserror::Error;

use crate::geo::LatLon;
use crate::graph::{check_header, csv_error, reader, record_line, GraphError, MultilayerGraph};
use crate::mapper::{CellularTrajectory, MapError, NodePath, Observation};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Format(#[from] GraphError),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: unknown node '{id}'")]
    UnknownNode { id: String, line: u64 },
    #[error(transparent)]
    Invalid(#[from] MapError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn malformed(rec: &csv::StringRecord, message: impl Into<String>) -> CorpusError {
    CorpusError::Malformed {
        line: record_line(rec),
        message: message.into(),
    }
}

fn parse<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, what: &str) -> Result<T, CorpusError> {
    rec[i]
        .parse()
        .map_err(|_| malformed(rec, format!("bad {what} '{}'", &rec[i])))
}

/// Groups rows by their first column, rejecting ids whose rows are split up.
fn grouped<R: Read, T>(
    src: R,
    header: &[&str],
    mut row: impl FnMut(&csv::StringRecord) -> Result<T, CorpusError>,
) -> Result<Vec<(String, Vec<T>)>, CorpusError> {
    let mut rdr = reader(src);
    check_header(&mut rdr, header)?;
    let mut groups: Vec<(String, Vec<T>)> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let id = &rec[0];
        let value = row(&rec)?;
        match groups.last_mut() {
            Some((last, items)) if last == id => items.push(value),
            _ => {
                if !seen.insert(id.to_string()) {
                    return Err(malformed(&rec, format!("rows of trajectory '{id}' are not contiguous")));
                }
                groups.push((id.to_string(), vec![value]));
            }
        }
    }
    Ok(groups)
}

pub fn read_trajectories<R: Read>(src: R) -> Result<Vec<CellularTrajectory>, CorpusError> {
    let groups = grouped(src, &["trajectory_id", "timestamp", "tower_id"], |rec| {
        Ok(Observation {
            timestamp: parse(rec, 1, "timestamp")?,
            tower_id: rec[2].to_string(),
        })
    })?;
    groups
        .into_iter()
        .map(|(id, obs)| CellularTrajectory::new(id, obs).map_err(CorpusError::from))
        .collect()
}

pub fn write_trajectories<W: Write>(mut out: W, trajectories: &[CellularTrajectory]) -> std::io::Result<()> {
    writeln!(out, "trajectory_id,timestamp,tower_id")?;
    for t in trajectories {
        for o in &t.observations {
            writeln!(out, "{},{},{}", t.id, o.timestamp, o.tower_id)?;
        }
    }
    Ok(())
}

/// Reads node paths, resolving node ids against `graph`. A file without any
/// skeleton flags yields an empty `skeleton_indices`.
pub fn read_paths<R: Read>(src: R, graph: &MultilayerGraph) -> Result<Vec<NodePath>, CorpusError> {
    let groups = grouped(src, &["trajectory_id", "seq_index", "node_id", "is_skeleton"], |rec| {
        let seq: usize = parse(rec, 1, "seq_index")?;
        let node = graph.index_of(&rec[2]).ok_or_else(|| CorpusError::UnknownNode {
            id: rec[2].to_string(),
            line: record_line(rec),
        })?;
        let skeleton = match &rec[3] {
            "0" => false,
            "1" => true,
            other => return Err(malformed(rec, format!("is_skeleton must be 0 or 1, found '{other}'"))),
        };
        Ok((seq, node, skeleton, record_line(rec)))
    })?;
    let mut paths = Vec::with_capacity(groups.len());
    for (id, rows) in groups {
        let mut nodes = Vec::with_capacity(rows.len());
        let mut skeleton_indices = Vec::new();
        for (expected, (seq, node, skeleton, line)) in rows.into_iter().enumerate() {
            if seq != expected {
                return Err(CorpusError::Malformed {
                    line,
                    message: format!("trajectory '{id}': expected seq_index {expected}, found {seq}"),
                });
            }
            nodes.push(node);
            if skeleton {
                skeleton_indices.push(seq);
            }
        }
        paths.push(NodePath {
            trajectory_id: id,
            nodes,
            skeleton_indices,
        });
    }
    Ok(paths)
}

/// Writes node paths. A node that stands for several consecutive skeleton
/// entries is written once.
pub fn write_paths<W: Write>(mut out: W, graph: &MultilayerGraph, paths: &[NodePath]) -> std::io::Result<()> {
    writeln!(out, "trajectory_id,seq_index,node_id,is_skeleton")?;
    for p in paths {
        let mut flags = vec![false; p.nodes.len()];
        for &i in &p.skeleton_indices {
            flags[i] = true;
        }
        for (i, &v) in p.nodes.iter().enumerate() {
            writeln!(out, "{},{},{},{}", p.trajectory_id, i, graph.node(v).id, u8::from(flags[i]))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpsTrack {
    pub trajectory_id: String,
    pub points: Vec<(i64, LatLon)>,
}

pub fn read_gps<R: Read>(src: R) -> Result<Vec<GpsTrack>, CorpusError> {
    let groups = grouped(src, &["trajectory_id", "timestamp", "lat", "lon"], |rec| {
        let p = LatLon::new(parse(rec, 2, "lat")?, parse(rec, 3, "lon")?);
        if !p.is_valid() {
            return Err(malformed(rec, "coordinates out of range"));
        }
        Ok((parse::<i64>(rec, 1, "timestamp")?, p))
    })?;
    Ok(groups
        .into_iter()
        .map(|(trajectory_id, points)| GpsTrack { trajectory_id, points })
        .collect())
}
