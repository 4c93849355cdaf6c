//! Exhaustive reference matcher used to check the pruned search.

use std::collections::HashMap;

use super::{CandidatePath, MatchError};
use crate::roadnet::{NodeId, RoadGraph};
use crate::trajgraph::TrajectoryGraph;

pub const ORACLE_MAX_NODES: usize = 200;

/// All node sequences with `len` nodes that follow graph edges, without any
/// length pruning.
fn all_paths(g: &RoadGraph, len: usize, allow_node_reuse: bool) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut stack: Vec<Vec<usize>> = (0..g.node_count()).map(|s| vec![s]).collect();
    while let Some(path) = stack.pop() {
        if path.len() == len {
            out.push(path);
            continue;
        }
        let tail = path[path.len() - 1];
        for &(next, _) in g.neighbors(tail) {
            if allow_node_reuse || !path.contains(&next) {
                let mut p = path.clone();
                p.push(next);
                stack.push(p);
            }
        }
    }
    out
}

/// Enumerates every path with as many nodes as the trajectory, keeps those
/// whose every segment is within `sigma` of the trajectory weight, and folds
/// reversed pairs into the better-scoring orientation.
pub fn brute_force_match(
    g: &RoadGraph,
    traj: &TrajectoryGraph,
    sigma: f64,
    allow_node_reuse: bool,
) -> Result<Vec<CandidatePath>, MatchError> {
    if g.node_count() > ORACLE_MAX_NODES {
        return Err(MatchError::OracleTooLarge {
            nodes: g.node_count(),
        });
    }
    let weights = &traj.edge_weights_m;
    if weights.is_empty() {
        return Err(MatchError::TrajectoryTooShort);
    }

    let mut kept: HashMap<Vec<NodeId>, CandidatePath> = HashMap::new();
    for path in all_paths(g, weights.len() + 1, allow_node_reuse) {
        let ids: Vec<NodeId> = path.iter().map(|&i| g.node_at(i).id).collect();
        let lengths: Vec<f64> = ids
            .windows(2)
            .map(|w| g.edge_length(w[0], w[1]).expect("path follows edges"))
            .collect();
        let admitted = lengths
            .iter()
            .zip(weights)
            .all(|(&w, &wr)| (w - wr).abs() <= sigma * w);
        if !admitted {
            continue;
        }
        let residuals: Vec<f64> = lengths
            .iter()
            .zip(weights)
            .map(|(w, wr)| (w - wr).abs())
            .collect();
        let theta_m = residuals.iter().sum::<f64>() / residuals.len() as f64;
        let cand = CandidatePath {
            node_ids: ids.clone(),
            edge_lengths_m: lengths,
            residuals_m: residuals,
            theta_m,
            sigma_used: sigma,
        };
        let mut rev = ids.clone();
        rev.reverse();
        let key = if rev < ids { rev } else { ids };
        let replace = match kept.get(&key) {
            None => true,
            Some(old) => {
                cand.theta_m < old.theta_m
                    || (cand.theta_m == old.theta_m && cand.node_ids < old.node_ids)
            }
        };
        if replace {
            kept.insert(key, cand);
        }
    }
    let mut out: Vec<CandidatePath> = kept.into_values().collect();
    out.sort_by(|a, b| {
        a.theta_m
            .total_cmp(&b.theta_m)
            .then_with(|| a.node_ids.cmp(&b.node_ids))
    });
    Ok(out)
}
