//! Mapping quality metrics against ground-truth paths.
//!
//! Two nodes "match" when they lie within `epsilon_km` of each other. All
//! match-based scores are therefore non-decreasing in epsilon.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use serde::Serialize;

use crate::cellnet::{CellNetError, CellularNetwork};
use crate::geo::LatLon;
use crate::graph::{Layer, MultilayerGraph};
use crate::mapper::{CellularTrajectory, NodePath};

pub type GroundTruthPath = NodePath;

pub const DEFAULT_MIN_TRIP_KM: f64 = 5.0;
pub const DEFAULT_NEIGHBOR_QUANTILE: f64 = 0.97;
pub const DEFAULT_SNAP_GATE_KM: f64 = 0.1;

/// 0.1, 0.2, ..., 1.0 km.
pub fn default_epsilon_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

pub fn node_match(graph: &MultilayerGraph, a: usize, b: usize, epsilon_km: f64) -> bool {
    graph.distance(a, b) <= epsilon_km
}

/// Unit-cost Levenshtein distance where substitution is free for matching nodes.
pub fn edit_distance_count(graph: &MultilayerGraph, pred: &[usize], truth: &[usize], epsilon_km: f64) -> usize {
    let m = truth.len();
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut cur = vec![0; m + 1];
    for (i, &p) in pred.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &t) in truth.iter().enumerate() {
            let sub = prev[j] + usize::from(!node_match(graph, p, t, epsilon_km));
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// `1 - distance / max(len)`, in [0, 1].
pub fn edit_similarity(graph: &MultilayerGraph, pred: &[usize], truth: &[usize], epsilon_km: f64) -> f64 {
    let longest = pred.len().max(truth.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - edit_distance_count(graph, pred, truth, epsilon_km) as f64 / longest as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub matched: usize,
    /// Set when the prediction was empty and precision is reported as 0.
    pub precision_undefined: bool,
}

fn distinct(nodes: &[usize]) -> Vec<usize> {
    let mut seen = HashSet::new();
    nodes.iter().copied().filter(|n| seen.insert(*n)).collect()
}

/// Greedy one-to-one matching by ascending distance; returns matched pairs as set positions.
fn greedy_matching(graph: &MultilayerGraph, pred: &[usize], truth: &[usize], epsilon_km: f64) -> usize {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &p) in pred.iter().enumerate() {
        for (j, &t) in truth.iter().enumerate() {
            let d = graph.distance(p, t);
            if d <= epsilon_km {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = vec![false; pred.len()];
    let mut used_t = vec![false; truth.len()];
    let mut matched = 0;
    for (_, i, j) in pairs {
        if !used_p[i] && !used_t[j] {
            used_p[i] = true;
            used_t[j] = true;
            matched += 1;
        }
    }
    matched
}

/// Precision and recall of the predicted node set against the truth node set.
pub fn precision_recall(graph: &MultilayerGraph, pred: &[usize], truth: &[usize], epsilon_km: f64) -> PrecisionRecall {
    let pred = distinct(pred);
    let truth = distinct(truth);
    let matched = greedy_matching(graph, &pred, &truth, epsilon_km);
    PrecisionRecall {
        precision: if pred.is_empty() { 0.0 } else { matched as f64 / pred.len() as f64 },
        recall: if truth.is_empty() { 0.0 } else { matched as f64 / truth.len() as f64 },
        matched,
        precision_undefined: pred.is_empty(),
    }
}

/// Edit distance in kilometers. Substitutions cost the distance between the
/// two nodes; an inserted or deleted node costs its distance to the nearer of
/// the two nodes it sits between in the other sequence.
pub fn edit_distance_km(graph: &MultilayerGraph, pred: &[usize], truth: &[usize]) -> f64 {
    let (n, m) = (pred.len(), truth.len());
    let gap = |node: usize, other: &[usize], pos: usize| -> f64 {
        // node sits between other[pos-1] and other[pos]
        let left = pos.checked_sub(1).map(|k| graph.distance(node, other[k]));
        let right = other.get(pos).map(|&o| graph.distance(node, o));
        match (left, right) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => 0.0,
        }
    };
    let mut dp = vec![vec![0.0; m + 1]; n + 1];
    for i in 1..=n {
        dp[i][0] = dp[i - 1][0] + gap(pred[i - 1], truth, 0);
    }
    for j in 1..=m {
        dp[0][j] = dp[0][j - 1] + gap(truth[j - 1], pred, 0);
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = dp[i - 1][j - 1] + graph.distance(pred[i - 1], truth[j - 1]);
            let del = dp[i - 1][j] + gap(pred[i - 1], truth, j);
            let ins = dp[i][j - 1] + gap(truth[j - 1], pred, i);
            dp[i][j] = sub.min(del).min(ins);
        }
    }
    dp[n][m]
}

/// Root mean square of each predicted node's distance to its nearest truth node.
pub fn rmse_km(graph: &MultilayerGraph, pred: &[usize], truth: &[usize]) -> f64 {
    if pred.is_empty() || truth.is_empty() {
        return 0.0;
    }
    let sum: f64 = pred
        .iter()
        .map(|&p| {
            let d = truth.iter().map(|&t| graph.distance(p, t)).fold(f64::INFINITY, f64::min);
            d * d
        })
        .sum();
    (sum / pred.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerScore {
    pub layer: Layer,
    pub pred_nodes: usize,
    pub truth_nodes: usize,
    pub precision: f64,
    pub recall: f64,
    pub precision_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerMetrics {
    pub layers: Vec<LayerScore>,
    /// Precision averaged over layers, weighted by predicted node count.
    pub precision: f64,
    /// Recall averaged over layers, weighted by truth node count.
    pub recall: f64,
}

/// Per-layer detection scores: a predicted node of layer L counts only when
/// it matches a truth node of the same layer.
pub fn layer_metrics(graph: &MultilayerGraph, pred: &[usize], truth: &[usize], epsilon_km: f64) -> LayerMetrics {
    let pred = distinct(pred);
    let truth = distinct(truth);
    let mut layers = Vec::new();
    let (mut p_num, mut p_den, mut r_num, mut r_den) = (0.0, 0usize, 0.0, 0usize);
    for layer in Layer::ALL {
        let lp: Vec<usize> = pred.iter().copied().filter(|&v| graph.node(v).layer == layer).collect();
        let lt: Vec<usize> = truth.iter().copied().filter(|&v| graph.node(v).layer == layer).collect();
        if lp.is_empty() && lt.is_empty() {
            continue;
        }
        let pr = precision_recall(graph, &lp, &lt, epsilon_km);
        p_num += pr.precision * lp.len() as f64;
        p_den += lp.len();
        r_num += pr.recall * lt.len() as f64;
        r_den += lt.len();
        layers.push(LayerScore {
            layer,
            pred_nodes: lp.len(),
            truth_nodes: lt.len(),
            precision: pr.precision,
            recall: pr.recall,
            precision_undefined: pr.precision_undefined,
        });
    }
    LayerMetrics {
        layers,
        precision: if p_den == 0 { 0.0 } else { p_num / p_den as f64 },
        recall: if r_den == 0 { 0.0 } else { r_num / r_den as f64 },
    }
}

/// Total great-circle length of a node sequence.
pub fn path_length_km(graph: &MultilayerGraph, nodes: &[usize]) -> f64 {
    nodes.windows(2).map(|w| graph.distance(w[0], w[1])).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterReport {
    pub min_km: f64,
    pub quantile: f64,
    pub quantile_threshold_km: f64,
    pub threshold_km: f64,
    pub kept: usize,
    pub dropped: Vec<String>,
}

/// Drops trips whose ground-truth length is below `max(min_km, x_q)`, where
/// `x_q` is the `q`-quantile of neighbouring antenna distances.
pub fn filter_corpus(
    graph: &MultilayerGraph,
    trajectories: Vec<CellularTrajectory>,
    truths: Vec<GroundTruthPath>,
    network: &CellularNetwork,
    min_km: f64,
    q: f64,
) -> Result<(Vec<CellularTrajectory>, Vec<GroundTruthPath>, FilterReport), CellNetError> {
    let x_th = network.neighbor_distance_quantile(q)?;
    let threshold = min_km.max(x_th);
    let lengths: BTreeMap<String, f64> = truths
        .iter()
        .map(|t| (t.trajectory_id.clone(), path_length_km(graph, &t.nodes)))
        .collect();
    let keep_id = |id: &str| lengths.get(id).is_some_and(|&len| len >= threshold);
    let mut dropped: Vec<String> = trajectories
        .iter()
        .map(|t| t.id.clone())
        .chain(truths.iter().map(|t| t.trajectory_id.clone()))
        .filter(|id| !keep_id(id))
        .collect();
    dropped.sort();
    dropped.dedup();
    let kept_traj: Vec<CellularTrajectory> = trajectories.into_iter().filter(|t| keep_id(&t.id)).collect();
    let kept_truth: Vec<GroundTruthPath> = truths.into_iter().filter(|t| keep_id(&t.trajectory_id)).collect();
    let report = FilterReport {
        min_km,
        quantile: q,
        quantile_threshold_km: x_th,
        threshold_km: threshold,
        kept: kept_truth.len(),
        dropped,
    };
    Ok((kept_traj, kept_truth, report))
}

/// Snaps GPS fixes to their nearest node, discarding fixes farther than `gate_km`
/// and collapsing consecutive repeats. Returns the path and the number dropped.
pub fn snap_gps(graph: &MultilayerGraph, trajectory_id: &str, points: &[LatLon], gate_km: f64) -> (GroundTruthPath, usize) {
    let mut nodes: Vec<usize> = Vec::new();
    let mut dropped = 0;
    for &p in points {
        let nearest = (0..graph.node_count())
            .map(|i| (graph.metric().distance(p, graph.position(i)), i))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        match nearest {
            Some((d, i)) if d <= gate_km => {
                if nodes.last() != Some(&i) {
                    nodes.push(i);
                }
            }
            _ => dropped += 1,
        }
    }
    let path = NodePath {
        trajectory_id: trajectory_id.to_string(),
        skeleton_indices: Vec::new(),
        nodes,
    };
    (path, dropped)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonScores {
    pub epsilon_km: f64,
    pub precision: f64,
    pub recall: f64,
    pub precision_undefined: bool,
    pub skeleton_similarity: f64,
    pub complete_similarity: f64,
    pub layer_precision: f64,
    pub layer_recall: f64,
    pub layers: Vec<LayerScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryEval {
    pub trajectory_id: String,
    pub rmse_km: f64,
    pub edit_distance_km: f64,
    pub scores: Vec<EpsilonScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanScores {
    pub epsilon_km: f64,
    pub precision: f64,
    pub recall: f64,
    pub skeleton_similarity: f64,
    pub complete_similarity: f64,
    pub layer_precision: f64,
    pub layer_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalIssue {
    pub trajectory_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub epsilon_grid: Vec<f64>,
    pub trajectories: Vec<TrajectoryEval>,
    pub means: Vec<MeanScores>,
    pub mean_rmse_km: f64,
    pub mean_edit_distance_km: f64,
    pub evaluated: usize,
    pub failed: usize,
    pub errors: Vec<EvalIssue>,
}

/// Scores one predicted path against its truth across the epsilon grid.
pub fn evaluate_trajectory(graph: &MultilayerGraph, pred: &NodePath, truth: &GroundTruthPath, epsilon_grid: &[f64]) -> TrajectoryEval {
    let pred_skeleton = pred.skeleton_nodes();
    let truth_skeleton = if truth.skeleton_indices.is_empty() {
        truth.nodes.clone()
    } else {
        truth.skeleton_nodes()
    };
    let scores = epsilon_grid
        .iter()
        .map(|&eps| {
            let pr = precision_recall(graph, &pred.nodes, &truth.nodes, eps);
            let lm = layer_metrics(graph, &pred.nodes, &truth.nodes, eps);
            EpsilonScores {
                epsilon_km: eps,
                precision: pr.precision,
                recall: pr.recall,
                precision_undefined: pr.precision_undefined,
                skeleton_similarity: edit_similarity(graph, &pred_skeleton, &truth_skeleton, eps),
                complete_similarity: edit_similarity(graph, &pred.nodes, &truth.nodes, eps),
                layer_precision: lm.precision,
                layer_recall: lm.recall,
                layers: lm.layers,
            }
        })
        .collect();
    TrajectoryEval {
        trajectory_id: truth.trajectory_id.clone(),
        rmse_km: rmse_km(graph, &pred.nodes, &truth.nodes),
        edit_distance_km: edit_distance_km(graph, &pred.nodes, &truth.nodes),
        scores,
    }
}

/// Evaluates every prediction against the truth with the same id. Ids present
/// on one side only become error entries; evaluation continues.
pub fn evaluate_corpus(graph: &MultilayerGraph, preds: &[NodePath], truths: &[GroundTruthPath], epsilon_grid: &[f64]) -> EvalReport {
    use rayon::prelude::*;

    let pred_by_id: BTreeMap<&str, &NodePath> = preds.iter().map(|p| (p.trajectory_id.as_str(), p)).collect();
    let truth_by_id: BTreeMap<&str, &GroundTruthPath> = truths.iter().map(|t| (t.trajectory_id.as_str(), t)).collect();
    let mut errors = Vec::new();
    let mut pairs = Vec::new();
    for (id, truth) in &truth_by_id {
        match pred_by_id.get(id) {
            Some(pred) if pred.nodes.is_empty() => errors.push(EvalIssue {
                trajectory_id: id.to_string(),
                error: "empty prediction".into(),
            }),
            Some(pred) => pairs.push((*pred, *truth)),
            None => errors.push(EvalIssue {
                trajectory_id: id.to_string(),
                error: "no prediction for this trajectory".into(),
            }),
        }
    }
    for id in pred_by_id.keys().filter(|id| !truth_by_id.contains_key(*id)) {
        errors.push(EvalIssue {
            trajectory_id: id.to_string(),
            error: "no ground truth for this trajectory".into(),
        });
    }
    errors.sort_by(|a, b| a.trajectory_id.cmp(&b.trajectory_id));

    let trajectories: Vec<TrajectoryEval> = pairs
        .par_iter()
        .filter(|(_, truth)| !truth.nodes.is_empty())
        .map(|(pred, truth)| evaluate_trajectory(graph, pred, truth, epsilon_grid))
        .collect();
    let n = trajectories.len();
    let mean = |f: &dyn Fn(&TrajectoryEval) -> f64| {
        if n == 0 {
            0.0
        } else {
            trajectories.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let means = epsilon_grid
        .iter()
        .enumerate()
        .map(|(k, &eps)| MeanScores {
            epsilon_km: eps,
            precision: mean(&|t| t.scores[k].precision),
            recall: mean(&|t| t.scores[k].recall),
            skeleton_similarity: mean(&|t| t.scores[k].skeleton_similarity),
            complete_similarity: mean(&|t| t.scores[k].complete_similarity),
            layer_precision: mean(&|t| t.scores[k].layer_precision),
            layer_recall: mean(&|t| t.scores[k].layer_recall),
        })
        .collect();
    EvalReport {
        epsilon_grid: epsilon_grid.to_vec(),
        mean_rmse_km: mean(&|t| t.rmse_km),
        mean_edit_distance_km: mean(&|t| t.edit_distance_km),
        evaluated: n,
        failed: errors.len(),
        errors,
        means,
        trajectories,
    }
}

impl EvalReport {
    /// One row per (trajectory, epsilon, metric). Epsilon-free metrics leave the column empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "trajectory_id,epsilon_km,metric,value")?;
        for t in &self.trajectories {
            writeln!(out, "{},,rmse_km,{}", t.trajectory_id, t.rmse_km)?;
            writeln!(out, "{},,edit_distance_km,{}", t.trajectory_id, t.edit_distance_km)?;
            for s in &t.scores {
                let e = s.epsilon_km;
                let id = &t.trajectory_id;
                writeln!(out, "{id},{e},precision,{}", s.precision)?;
                writeln!(out, "{id},{e},recall,{}", s.recall)?;
                writeln!(out, "{id},{e},skeleton_similarity,{}", s.skeleton_similarity)?;
                writeln!(out, "{id},{e},complete_similarity,{}", s.complete_similarity)?;
                writeln!(out, "{id},{e},layer_precision,{}", s.layer_precision)?;
                writeln!(out, "{id},{e},layer_recall,{}", s.layer_recall)?;
                for l in &s.layers {
                    writeln!(out, "{id},{e},layer_precision_{},{}", l.layer, l.precision)?;
                    writeln!(out, "{id},{e},layer_recall_{},{}", l.layer, l.recall)?;
                }
            }
        }
        for issue in &self.errors {
            writeln!(out, "{},,error,{}", issue.trajectory_id, issue.error)?;
        }
        Ok(())
    }

    /// Corpus means as `(epsilon, metric, value)` rows, epsilon-free metrics last.
    pub fn mean_rows(&self) -> Vec<(Option<f64>, &'static str, f64)> {
        let mut rows = Vec::new();
        for m in &self.means {
            let e = Some(m.epsilon_km);
            rows.push((e, "precision", m.precision));
            rows.push((e, "recall", m.recall));
            rows.push((e, "skeleton_similarity", m.skeleton_similarity));
            rows.push((e, "complete_similarity", m.complete_similarity));
            rows.push((e, "layer_precision", m.layer_precision));
            rows.push((e, "layer_recall", m.layer_recall));
        }
        rows.push((None, "rmse_km", self.mean_rmse_km));
        rows.push((None, "edit_distance_km", self.mean_edit_distance_km));
        rows
    }
}

/// Side-by-side corpus means of two reports: `epsilon_km,metric,<a>,<b>`.
pub fn write_comparison_csv<W: Write>(mut out: W, a_name: &str, a: &EvalReport, b_name: &str, b: &EvalReport) -> std::io::Result<()> {
    writeln!(out, "epsilon_km,metric,{a_name},{b_name}")?;
    for ((e, metric, va), (_, _, vb)) in a.mean_rows().into_iter().zip(b.mean_rows()) {
        let e = e.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{e},{metric},{va},{vb}")?;
    }
    Ok(())
}
