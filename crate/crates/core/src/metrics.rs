//! Scoring ranked candidates against the route actually driven.
//!
//! With `Q*` ground-truth nodes and `K` candidates:
//!
//! * success rate: distinct ground-truth nodes found by any candidate, over `Q*`
//! * precision: mean over candidates of (ground-truth nodes in candidate) / `Q*`
//! * distance offset: mean over candidates of the summed index-aligned
//!   haversine distance to the ground truth, over `Q*`
//! * false negative rate: mean over candidates of (ground-truth nodes missing
//!   from candidate) / `Q*`
//!
//! Node identity is road node id equality.

use std::collections::BTreeSet;

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::haversine_m;
use crate::matcher::{AttackResult, CandidatePath};
use crate::roadnet::{NodeId, RoadGraph};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("result has no candidates")]
    EmptyResult,
    #[error("node {0} is not in the road graph")]
    UnknownNode(NodeId),
    #[error("invalid ground truth: {0}")]
    InvalidGroundTruth(String),
}

/// The route actually driven, as road node ids in travel order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub node_ids: Vec<NodeId>,
}

impl GroundTruth {
    /// Checks that the route has at least two nodes and follows road edges.
    pub fn new(node_ids: Vec<NodeId>, g: &RoadGraph) -> Result<Self, MetricsError> {
        let gt = Self { node_ids };
        gt.validate(g)?;
        Ok(gt)
    }

    pub fn validate(&self, g: &RoadGraph) -> Result<(), MetricsError> {
        if self.node_ids.len() < 2 {
            return Err(MetricsError::InvalidGroundTruth(
                "route needs at least two nodes".into(),
            ));
        }
        for w in self.node_ids.windows(2) {
            if g.edge_length(w[0], w[1]).is_none() {
                return Err(MetricsError::InvalidGroundTruth(format!(
                    "{} and {} are not adjacent",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }

    /// Number of distinct ground-truth nodes.
    pub fn q_star(&self) -> usize {
        self.node_set().len()
    }

    fn node_set(&self) -> BTreeSet<NodeId> {
        self.node_ids.iter().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEval {
    /// Ground-truth nodes present in the candidate.
    pub correct_count: usize,
    /// Ground-truth nodes absent from the candidate.
    pub missed_count: usize,
    /// Summed pair distance divided by `Q*`.
    pub mean_pair_distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub psi: f64,
    pub precision: f64,
    pub offset_m: f64,
    pub fnr: f64,
    pub per_candidate: Vec<CandidateEval>,
}

fn correct(c: &CandidatePath, truth: &BTreeSet<NodeId>) -> usize {
    c.node_ids
        .iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|id| truth.contains(id))
        .count()
}

pub fn success_rate(cands: &[CandidatePath], gt: &GroundTruth) -> f64 {
    let truth = gt.node_set();
    let found: BTreeSet<NodeId> = cands
        .iter()
        .flat_map(|c| c.node_ids.iter().copied())
        .filter(|id| truth.contains(id))
        .collect();
    found.len() as f64 / gt.q_star() as f64
}

// Both rates are taken as one integer count over `K * Q*`, which equals the
// mean of the per-candidate ratios and keeps P + 𝔽 = 1 free of round-off.
pub fn precision(cands: &[CandidatePath], gt: &GroundTruth) -> Result<f64, MetricsError> {
    if cands.is_empty() {
        return Err(MetricsError::EmptyResult);
    }
    let truth = gt.node_set();
    let found: usize = cands.iter().map(|c| correct(c, &truth)).sum();
    Ok(found as f64 / (cands.len() * gt.q_star()) as f64)
}

pub fn false_negative_rate(cands: &[CandidatePath], gt: &GroundTruth) -> Result<f64, MetricsError> {
    if cands.is_empty() {
        return Err(MetricsError::EmptyResult);
    }
    let truth = gt.node_set();
    let missed: usize = cands
        .iter()
        .map(|c| {
            let present: BTreeSet<&NodeId> = c.node_ids.iter().collect();
            truth.iter().filter(|id| !present.contains(id)).count()
        })
        .sum();
    Ok(missed as f64 / (cands.len() * gt.q_star()) as f64)
}

fn coords(g: &RoadGraph, ids: &[NodeId]) -> Result<Vec<(f64, f64)>, MetricsError> {
    ids.iter()
        .map(|id| {
            g.node(*id)
                .map(|n| (n.lat, n.lon))
                .ok_or(MetricsError::UnknownNode(*id))
        })
        .collect()
}

fn aligned_sum<'a>(truth: &[(f64, f64)], cand: impl Iterator<Item = &'a (f64, f64)>) -> f64 {
    truth
        .iter()
        .zip(cand)
        .map(|(a, b)| haversine_m(a.0, a.1, b.0, b.1))
        .sum()
}

/// Summed index-aligned distance, taking the better of the two candidate
/// orientations.
fn pair_distance_sum(truth: &[(f64, f64)], cand: &[(f64, f64)]) -> f64 {
    if truth.len() != cand.len() {
        debug!(
            "offset_length_mismatch truth={} candidate={}",
            truth.len(),
            cand.len()
        );
    }
    let forward = aligned_sum(truth, cand.iter());
    let backward = aligned_sum(truth, cand.iter().rev());
    forward.min(backward)
}

pub fn distance_offset(
    cands: &[CandidatePath],
    gt: &GroundTruth,
    g: &RoadGraph,
) -> Result<f64, MetricsError> {
    if cands.is_empty() {
        return Err(MetricsError::EmptyResult);
    }
    let truth = coords(g, &gt.node_ids)?;
    let q = gt.q_star() as f64;
    let mut total = 0.0;
    for c in cands {
        total += pair_distance_sum(&truth, &coords(g, &c.node_ids)?) / q;
    }
    Ok(total / cands.len() as f64)
}

/// All four metrics for a candidate list.
pub fn evaluate_candidates(
    cands: &[CandidatePath],
    gt: &GroundTruth,
    g: &RoadGraph,
) -> Result<EvalReport, MetricsError> {
    if cands.is_empty() {
        return Err(MetricsError::EmptyResult);
    }
    let truth_set = gt.node_set();
    let truth = coords(g, &gt.node_ids)?;
    let q = gt.q_star();
    let per_candidate = cands
        .iter()
        .map(|c| {
            let correct_count = correct(c, &truth_set);
            Ok(CandidateEval {
                correct_count,
                missed_count: q - correct_count,
                mean_pair_distance_m: pair_distance_sum(&truth, &coords(g, &c.node_ids)?)
                    / q as f64,
            })
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    Ok(EvalReport {
        psi: success_rate(cands, gt),
        precision: precision(cands, gt)?,
        offset_m: distance_offset(cands, gt, g)?,
        fnr: false_negative_rate(cands, gt)?,
        per_candidate,
    })
}

pub fn evaluate(
    result: &AttackResult,
    gt: &GroundTruth,
    g: &RoadGraph,
) -> Result<EvalReport, MetricsError> {
    evaluate_candidates(&result.candidates, gt, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LocalFrame;
    use crate::roadnet::{RoadEdge, RoadNode};

    fn cand(ids: &[i64]) -> CandidatePath {
        CandidatePath {
            node_ids: ids.iter().map(|&i| NodeId(i)).collect(),
            edge_lengths_m: vec![],
            residuals_m: vec![],
            theta_m: 0.0,
            sigma_used: 0.05,
        }
    }

    fn gt(ids: &[i64]) -> GroundTruth {
        GroundTruth {
            node_ids: ids.iter().map(|&i| NodeId(i)).collect(),
        }
    }

    #[test]
    fn perfect_candidate() {
        let truth = gt(&[1, 2, 3, 4, 5]);
        let c = [cand(&[1, 2, 3, 4, 5])];
        assert_eq!(success_rate(&c, &truth), 1.0);
        assert_eq!(precision(&c, &truth).unwrap(), 1.0);
        assert_eq!(false_negative_rate(&c, &truth).unwrap(), 0.0);
    }

    #[test]
    fn two_candidate_fixture() {
        // candidate A finds 4 of 5, candidate B finds 2 that A also found
        let truth = gt(&[1, 2, 3, 4, 5]);
        let c = [cand(&[1, 2, 3, 4, 99]), cand(&[2, 3, 97, 98, 96])];
        assert!((success_rate(&c, &truth) - 0.8).abs() < 1e-12);
        assert!((precision(&c, &truth).unwrap() - 0.6).abs() < 1e-12);
        assert!((false_negative_rate(&c, &truth).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn empty_and_wrong_results() {
        let truth = gt(&[1, 2, 3]);
        assert_eq!(success_rate(&[], &truth), 0.0);
        assert_eq!(precision(&[], &truth), Err(MetricsError::EmptyResult));
        assert_eq!(
            false_negative_rate(&[], &truth),
            Err(MetricsError::EmptyResult)
        );
        let wrong = [cand(&[7, 8, 9])];
        assert_eq!(precision(&wrong, &truth).unwrap(), 0.0);
        assert_eq!(false_negative_rate(&wrong, &truth).unwrap(), 1.0);
    }

    fn square_graph() -> RoadGraph {
        // 1,2 on a line; 3,4 each exactly 1000 m north of 1,2
        let f = LocalFrame::new(-33.87, 151.21);
        let pts = [
            (1, 0.0, 0.0),
            (2, 500.0, 0.0),
            (3, 0.0, 1000.0),
            (4, 500.0, 1000.0),
        ];
        let nodes = pts
            .iter()
            .map(|&(id, e, n)| {
                let (lat, lon) = f.to_geo(e, n);
                RoadNode {
                    id: NodeId(id),
                    lat,
                    lon,
                }
            })
            .collect();
        let e = |u, v| RoadEdge {
            u: NodeId(u),
            v: NodeId(v),
            length_m: 500.0,
        };
        RoadGraph::new(nodes, vec![e(1, 2), e(3, 4), e(1, 3), e(2, 4)]).unwrap()
    }

    #[test]
    fn offset_sums_pair_distances() {
        let g = square_graph();
        let truth = gt(&[1, 2]);
        let d = distance_offset(&[cand(&[1, 2])], &truth, &g).unwrap();
        assert_eq!(d, 0.0);
        let n1 = g.node(NodeId(1)).unwrap();
        let n3 = g.node(NodeId(3)).unwrap();
        let per_pair = haversine_m(n1.lat, n1.lon, n3.lat, n3.lon);
        assert!((per_pair - 1000.0).abs() < 0.01);
        let d = distance_offset(&[cand(&[3, 4])], &truth, &g).unwrap();
        assert!((d - 1000.0).abs() < 0.01, "{d}");
    }

    #[test]
    fn offset_uses_better_orientation() {
        let g = square_graph();
        let truth = gt(&[1, 2]);
        assert_eq!(distance_offset(&[cand(&[2, 1])], &truth, &g).unwrap(), 0.0);
    }

    #[test]
    fn offset_unknown_node() {
        let g = square_graph();
        assert_eq!(
            distance_offset(&[cand(&[1, 42])], &gt(&[1, 2]), &g),
            Err(MetricsError::UnknownNode(NodeId(42)))
        );
    }

    #[test]
    fn report_is_consistent() {
        let g = square_graph();
        let truth = gt(&[1, 2, 4]);
        let r = evaluate_candidates(&[cand(&[1, 2, 4]), cand(&[2, 1, 3])], &truth, &g).unwrap();
        assert_eq!(r.psi, 1.0);
        assert!((r.precision + r.fnr - 1.0).abs() < 1e-12);
        assert_eq!(r.per_candidate[1].correct_count, 2);
        assert_eq!(r.per_candidate[1].missed_count, 1);
    }

    #[test]
    fn ground_truth_validation() {
        let g = square_graph();
        assert!(GroundTruth::new(vec![NodeId(1), NodeId(2), NodeId(4)], &g).is_ok());
        assert!(GroundTruth::new(vec![NodeId(1), NodeId(4)], &g).is_err());
        assert!(GroundTruth::new(vec![NodeId(1)], &g).is_err());
    }
}
