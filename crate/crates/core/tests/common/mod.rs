//! Random instance generators shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeSet;

use canpath::geo::LocalFrame;
use canpath::matcher::CandidatePath;
use canpath::roadnet::{NodeId, RoadEdge, RoadGraph, RoadNode};
use canpath::trajgraph::TrajectoryGraph;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const ORIGIN: (f64, f64) = (-33.8688, 151.2093);

/// Connected sparse graph: a random spanning tree plus `extra` chords. Ids are
/// scattered (not `0..n`) and lengths are drawn from a coarse palette so that
/// many paths look alike to the matcher.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, extra: usize) -> RoadGraph {
    let frame = LocalFrame::new(ORIGIN.0, ORIGIN.1);
    let ids: Vec<i64> = (0..n as i64).map(|i| i * 7 + 1000 + (i % 3)).collect();
    let nodes: Vec<RoadNode> = ids
        .iter()
        .map(|&id| {
            let (lat, lon) = frame.to_geo(
                rng.random_range(-3000.0..3000.0),
                rng.random_range(-3000.0..3000.0),
            );
            RoadNode {
                id: NodeId(id),
                lat,
                lon,
            }
        })
        .collect();
    let mut pairs = BTreeSet::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        pairs.insert((j.min(i), j.max(i)));
    }
    let mut attempts = 0;
    while pairs.len() < n.saturating_sub(1) + extra && attempts < 10 * (extra + 1) && n > 2 {
        attempts += 1;
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(a, b)| RoadEdge {
            u: NodeId(ids[a]),
            v: NodeId(ids[b]),
            length_m: 100.0 + 10.0 * rng.random_range(0..20) as f64,
        })
        .collect();
    RoadGraph::new(nodes, edges).expect("generated graph is valid")
}

/// Node indices of a random walk of `edges` steps that never revisits a node,
/// or `None` if the walk gets stuck.
pub fn random_simple_walk(g: &RoadGraph, rng: &mut ChaCha8Rng, edges: usize) -> Option<Vec<usize>> {
    let mut path = vec![rng.random_range(0..g.node_count())];
    while path.len() <= edges {
        let tail = *path.last().unwrap();
        let options: Vec<usize> = g
            .neighbors(tail)
            .iter()
            .map(|&(j, _)| j)
            .filter(|j| !path.contains(j))
            .collect();
        path.push(*options.choose(rng)?);
    }
    Some(path)
}

pub fn path_lengths(g: &RoadGraph, path: &[usize]) -> Vec<f64> {
    path.windows(2)
        .map(|w| {
            g.edge_length(g.node_at(w[0]).id, g.node_at(w[1]).id)
                .unwrap()
        })
        .collect()
}

/// Trajectory shaped like a real walk in `g` with each weight scaled by up to
/// `±perturb`; falls back to arbitrary palette weights if the walk fails.
pub fn random_trajectory(
    g: &RoadGraph,
    rng: &mut ChaCha8Rng,
    edges: usize,
    perturb: f64,
) -> TrajectoryGraph {
    let base = match random_simple_walk(g, rng, edges) {
        Some(p) => path_lengths(g, &p),
        None => (0..edges)
            .map(|_| 100.0 + 10.0 * rng.random_range(0..20) as f64)
            .collect(),
    };
    let weights = base
        .into_iter()
        .map(|w| w * (1.0 + rng.random_range(-perturb..=perturb)))
        .collect();
    TrajectoryGraph::from_edge_weights(weights)
}

pub fn id_path(g: &RoadGraph, path: &[usize]) -> Vec<NodeId> {
    path.iter().map(|&i| g.node_at(i).id).collect()
}

pub fn candidate(ids: Vec<NodeId>) -> CandidatePath {
    CandidatePath {
        node_ids: ids,
        edge_lengths_m: vec![],
        residuals_m: vec![],
        theta_m: 0.0,
        sigma_used: 0.05,
    }
}

/// Orientation-independent identity of every candidate.
pub fn key_set(cands: &[CandidatePath]) -> BTreeSet<Vec<NodeId>> {
    cands.iter().map(|c| c.canonical_key()).collect()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}
