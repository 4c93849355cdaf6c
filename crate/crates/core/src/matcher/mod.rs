//! Locating a trajectory line graph inside a road network.
//!
//! A candidate is a path `v_1 .. v_Q` in the road graph, `Q` being the number
//! of trajectory nodes, where every road segment length `w` satisfies
//! `|w - w_R| <= sigma * w` against the matching trajectory edge weight `w_R`.
//! Candidates are scored by theta, the mean absolute weight difference, and
//! the `K` lowest scores form the result. The tolerance is escalated along a
//! ladder until at least `K` candidates exist.

mod export;
mod oracle;

use std::collections::BTreeMap;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roadnet::{NodeId, RoadGraph};
use crate::trajgraph::TrajectoryGraph;

pub use export::to_geojson;
pub use oracle::{brute_force_match, ORACLE_MAX_NODES};

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("trajectory needs at least one edge")]
    TrajectoryTooShort,
    #[error("invalid match config: {0}")]
    InvalidConfig(String),
    #[error("edge count mismatch: trajectory has {expected}, candidate has {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("graph with {nodes} nodes is too large for exhaustive enumeration")]
    OracleTooLarge { nodes: usize },
}

pub const DEFAULT_SIGMA_LADDER: [f64; 6] = [0.05, 0.10, 0.15, 0.20, 0.30, 0.50];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    /// Relative tolerances tried in order.
    pub sigma_ladder: Vec<f64>,
    /// Number of ranked candidates to keep.
    pub k: usize,
    /// Cap on directed paths collected per tolerance.
    pub max_candidates: usize,
    /// Permit a candidate to revisit road nodes.
    pub allow_node_reuse: bool,
    /// Spread the search over the rayon pool. Results do not depend on it,
    /// so it is left out of serialized results.
    #[serde(skip_serializing)]
    pub parallel: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            sigma_ladder: DEFAULT_SIGMA_LADDER.to_vec(),
            k: 10,
            max_candidates: 100_000,
            allow_node_reuse: false,
            parallel: true,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        let bad = |m: String| Err(MatchError::InvalidConfig(m));
        if self.sigma_ladder.is_empty() {
            return bad("sigma_ladder is empty".into());
        }
        if let Some(s) = self
            .sigma_ladder
            .iter()
            .find(|s| !(**s > 0.0 && **s <= 1.0))
        {
            return bad(format!("sigma {s} outside (0, 1]"));
        }
        if self.sigma_ladder.windows(2).any(|w| w[1] <= w[0]) {
            return bad("sigma_ladder must be strictly ascending".into());
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.max_candidates == 0 {
            return bad("max_candidates must be at least 1".into());
        }
        Ok(())
    }
}

/// One matched road path, oriented to line up with the trajectory edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePath {
    pub node_ids: Vec<NodeId>,
    pub edge_lengths_m: Vec<f64>,
    pub residuals_m: Vec<f64>,
    pub theta_m: f64,
    pub sigma_used: f64,
}

impl CandidatePath {
    fn from_indices(g: &RoadGraph, traj: &TrajectoryGraph, path: &[usize], sigma: f64) -> Self {
        let node_ids: Vec<NodeId> = path.iter().map(|&i| g.node_at(i).id).collect();
        let edge_lengths_m: Vec<f64> = path
            .windows(2)
            .map(|w| {
                let nb = g.neighbors(w[0]);
                let pos = nb
                    .binary_search_by_key(&w[1], |&(n, _)| n)
                    .expect("consecutive path nodes are adjacent");
                nb[pos].1
            })
            .collect();
        let residuals_m: Vec<f64> = edge_lengths_m
            .iter()
            .zip(&traj.edge_weights_m)
            .map(|(w, wr)| (w - wr).abs())
            .collect();
        let theta_m = residuals_m.iter().sum::<f64>() / residuals_m.len() as f64;
        Self {
            node_ids,
            edge_lengths_m,
            residuals_m,
            theta_m,
            sigma_used: sigma,
        }
    }

    /// Node sequence in the orientation that compares smaller.
    pub fn canonical_key(&self) -> Vec<NodeId> {
        let rev: Vec<NodeId> = self.node_ids.iter().rev().copied().collect();
        if rev < self.node_ids {
            rev
        } else {
            self.node_ids.clone()
        }
    }
}

/// Per-edge admission test; the tolerance scales with the road segment.
pub fn within_tolerance(road_m: f64, trajectory_m: f64, sigma: f64) -> bool {
    (road_m - trajectory_m).abs() <= sigma * road_m
}

/// Mean absolute difference between trajectory and candidate edge weights.
pub fn theta(traj: &TrajectoryGraph, cand: &CandidatePath) -> Result<f64, MatchError> {
    let n = traj.edge_weights_m.len();
    if cand.edge_lengths_m.len() != n {
        return Err(MatchError::LengthMismatch {
            expected: n,
            found: cand.edge_lengths_m.len(),
        });
    }
    if n == 0 {
        return Err(MatchError::TrajectoryTooShort);
    }
    let sum: f64 = traj
        .edge_weights_m
        .iter()
        .zip(&cand.edge_lengths_m)
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(sum / n as f64)
}

/// Ascending theta, ties by node id sequence.
pub fn rank_order(a: &CandidatePath, b: &CandidatePath) -> std::cmp::Ordering {
    a.theta_m
        .total_cmp(&b.theta_m)
        .then_with(|| a.node_ids.cmp(&b.node_ids))
}

/// Keeps one orientation of every path: the better-scoring one, or the
/// lexicographically smaller on equal scores.
pub(crate) fn dedup_orientations(cands: Vec<CandidatePath>) -> Vec<CandidatePath> {
    let mut best: BTreeMap<Vec<NodeId>, CandidatePath> = BTreeMap::new();
    for c in cands {
        let key = c.canonical_key();
        match best.get(&key) {
            Some(existing) if rank_order(existing, &c).is_le() => {}
            _ => {
                best.insert(key, c);
            }
        }
    }
    let mut out: Vec<CandidatePath> = best.into_values().collect();
    out.sort_by(rank_order);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    /// Deduplicated candidates in rank order.
    pub candidates: Vec<CandidatePath>,
    /// The directed path cap was hit; more matches may exist.
    pub truncated: bool,
}

struct Search<'a> {
    g: &'a RoadGraph,
    weights: &'a [f64],
    sigma: f64,
    allow_node_reuse: bool,
}

impl Search<'_> {
    /// Directed matches starting at `seed`, at most `cap` of them.
    fn from_seed(&self, seed: usize, cap: usize) -> Vec<Vec<usize>> {
        let mut found = Vec::new();
        let mut path = vec![seed];
        let mut on_path = vec![false; self.g.node_count()];
        on_path[seed] = true;
        self.extend(&mut path, &mut on_path, &mut found, cap);
        found
    }

    fn extend(
        &self,
        path: &mut Vec<usize>,
        on_path: &mut [bool],
        found: &mut Vec<Vec<usize>>,
        cap: usize,
    ) {
        let depth = path.len() - 1;
        if depth == self.weights.len() {
            found.push(path.clone());
            return;
        }
        let target = self.weights[depth];
        let tail = *path.last().expect("path starts with the seed");
        for &(next, length) in self.g.neighbors(tail) {
            if found.len() >= cap {
                return;
            }
            if !within_tolerance(length, target, self.sigma) {
                continue;
            }
            if on_path[next] && !self.allow_node_reuse {
                continue;
            }
            let was_on_path = on_path[next];
            on_path[next] = true;
            path.push(next);
            self.extend(path, on_path, found, cap);
            path.pop();
            on_path[next] = was_on_path;
        }
    }
}

/// Every road path matching the trajectory at tolerance `sigma`.
pub fn match_paths(
    g: &RoadGraph,
    traj: &TrajectoryGraph,
    sigma: f64,
    cfg: &MatchConfig,
) -> Result<MatchOutcome, MatchError> {
    if traj.edge_weights_m.is_empty() {
        return Err(MatchError::TrajectoryTooShort);
    }
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(MatchError::InvalidConfig(format!(
            "sigma {sigma} outside (0, 1]"
        )));
    }
    let search = Search {
        g,
        weights: &traj.edge_weights_m,
        sigma,
        allow_node_reuse: cfg.allow_node_reuse,
    };
    // one extra path past the cap tells truncation apart from an exact fit
    let cap = cfg.max_candidates.saturating_add(1);
    let mut raw: Vec<Vec<usize>> = Vec::new();
    if cfg.parallel {
        let per_seed: Vec<Vec<Vec<usize>>> = (0..g.node_count())
            .into_par_iter()
            .map(|seed| search.from_seed(seed, cap))
            .collect();
        for paths in per_seed {
            raw.extend(paths);
            if raw.len() >= cap {
                break;
            }
        }
    } else {
        for seed in 0..g.node_count() {
            raw.extend(search.from_seed(seed, cap - raw.len()));
            if raw.len() >= cap {
                break;
            }
        }
    }
    let truncated = raw.len() > cfg.max_candidates;
    raw.truncate(cfg.max_candidates);
    if truncated {
        log::warn!("match_truncated sigma={sigma} cap={}", cfg.max_candidates);
    }
    let cands = raw
        .iter()
        .map(|p| CandidatePath::from_indices(g, traj, p, sigma))
        .collect();
    Ok(MatchOutcome {
        candidates: dedup_orientations(cands),
        truncated,
    })
}

/// Candidates at the first ladder tolerance that yields at least `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Escalation {
    pub candidates: Vec<CandidatePath>,
    pub sigma_used: f64,
    pub truncated: bool,
}

/// Ladder search that remembers each rung, so several `k` values can be
/// served from one set of searches.
pub struct LadderSearch<'a> {
    g: &'a RoadGraph,
    traj: &'a TrajectoryGraph,
    cfg: &'a MatchConfig,
    rungs: Vec<Option<MatchOutcome>>,
}

impl<'a> LadderSearch<'a> {
    pub fn new(
        g: &'a RoadGraph,
        traj: &'a TrajectoryGraph,
        cfg: &'a MatchConfig,
    ) -> Result<Self, MatchError> {
        cfg.validate()?;
        if traj.edge_weights_m.is_empty() {
            return Err(MatchError::TrajectoryTooShort);
        }
        Ok(Self {
            g,
            traj,
            cfg,
            rungs: vec![None; cfg.sigma_ladder.len()],
        })
    }

    fn rung(&mut self, i: usize) -> Result<&MatchOutcome, MatchError> {
        if self.rungs[i].is_none() {
            let sigma = self.cfg.sigma_ladder[i];
            let outcome = match_paths(self.g, self.traj, sigma, self.cfg)?;
            debug!("sigma={sigma} candidates={}", outcome.candidates.len());
            self.rungs[i] = Some(outcome);
        }
        Ok(self.rungs[i].as_ref().expect("rung computed above"))
    }

    pub fn escalate(&mut self, k: usize) -> Result<Escalation, MatchError> {
        let last = self.cfg.sigma_ladder.len() - 1;
        for i in 0..=last {
            let sigma = self.cfg.sigma_ladder[i];
            let outcome = self.rung(i)?;
            if outcome.candidates.len() >= k || i == last {
                return Ok(Escalation {
                    candidates: outcome.candidates.clone(),
                    sigma_used: sigma,
                    truncated: outcome.truncated,
                });
            }
        }
        unreachable!("ladder is nonempty")
    }
}

pub fn escalate_and_match(
    g: &RoadGraph,
    traj: &TrajectoryGraph,
    cfg: &MatchConfig,
) -> Result<Escalation, MatchError> {
    LadderSearch::new(g, traj, cfg)?.escalate(cfg.k)
}

/// The `k` best candidates in rank order.
pub fn top_k(mut cands: Vec<CandidatePath>, k: usize) -> Vec<CandidatePath> {
    cands.sort_by(rank_order);
    cands.truncate(k);
    cands
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub candidates: Vec<CandidatePath>,
    pub trajectory: TrajectoryGraph,
    pub config: MatchConfig,
    pub sigma_used: f64,
    /// Candidates admitted at `sigma_used` before the top-k cut.
    pub matched_count: usize,
    pub truncated: bool,
}

impl AttackResult {
    pub fn from_escalation(esc: Escalation, traj: &TrajectoryGraph, cfg: &MatchConfig) -> Self {
        let matched_count = esc.candidates.len();
        Self {
            candidates: top_k(esc.candidates, cfg.k),
            trajectory: traj.clone(),
            config: cfg.clone(),
            sigma_used: esc.sigma_used,
            matched_count,
            truncated: esc.truncated,
        }
    }
}

/// Escalating search followed by top-k selection.
pub fn attack(
    g: &RoadGraph,
    traj: &TrajectoryGraph,
    cfg: &MatchConfig,
) -> Result<AttackResult, MatchError> {
    let esc = escalate_and_match(g, traj, cfg)?;
    Ok(AttackResult::from_escalation(esc, traj, cfg))
}
