//! CAN log to trajectory line graph.
//!
//! Stops are zero-speed samples and turns are idle-pedal samples. For each
//! kind the gaps between consecutive candidates are clustered to find a
//! threshold, candidates whose gap reaches it become nodes, nodes closer than
//! the shortest road segment are merged, and the remaining consecutive pairs
//! are weighted by the left-rectangle integral of speed.

mod threshold;

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canlog::{CanLog, CanSample, PedalSeries, SpeedSeries};

pub use threshold::{compute_threshold, compute_threshold_with, two_means, GapScale, Threshold};

/// Timestamp resolution used when comparing gaps against a threshold. Gaps
/// are differences of decimal timestamps and carry round-off of this order.
pub const TIME_EPS_S: f64 = 1e-6;

/// Relative slack on the merge comparison. A segment driven along the
/// shortest road edge integrates to that edge's length give or take
/// round-off, and must not be merged away.
pub const MERGE_REL_EPS: f64 = 1e-9;

const KMH_PER_MPS: f64 = 3.6;

#[derive(Debug, Error, PartialEq)]
pub enum TrajError {
    #[error("need at least {needed} values, found {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("trajectory has {found} node(s); at least 2 are required")]
    TooFewNodes { found: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Stop,
    Turn,
}

/// Samples satisfying the stop or turn predicate, in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub kind: EventKind,
    pub points: Vec<CanSample>,
}

impl CandidateSet {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Zero-speed samples.
pub fn stop_candidates(speed: &SpeedSeries) -> CandidateSet {
    CandidateSet {
        kind: EventKind::Stop,
        points: speed
            .samples()
            .iter()
            .filter(|s| s.value == 0.0)
            .copied()
            .collect(),
    }
}

/// Samples within `tolerance` of the idle pedal value.
pub fn turn_candidates(pedal: &PedalSeries, tolerance: f64) -> CandidateSet {
    let idle = pedal.idle_value();
    CandidateSet {
        kind: EventKind::Turn,
        points: pedal
            .samples()
            .iter()
            .filter(|s| (s.value - idle).abs() <= tolerance)
            .copied()
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapSeries {
    pub gaps: Vec<f64>,
}

pub fn gap_series(c: &CandidateSet) -> Result<GapSeries, TrajError> {
    if c.points.len() < 2 {
        return Err(TrajError::InsufficientData {
            needed: 2,
            found: c.points.len(),
        });
    }
    Ok(GapSeries {
        gaps: c
            .points
            .windows(2)
            .map(|w| w[1].time_s - w[0].time_s)
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryNode {
    #[serde(rename = "t")]
    pub event_time_s: f64,
    pub kind: EventKind,
}

/// Walks the candidates with a trailing index that follows every candidate,
/// emitting a node whenever the time since the previous candidate reaches
/// `delta_s`. The first candidate never fires.
pub fn extract_nodes(c: &CandidateSet, delta_s: f64) -> Vec<TrajectoryNode> {
    let Some(first) = c.points.first() else {
        return Vec::new();
    };
    let mut trailing = first.time_s;
    let mut nodes = Vec::new();
    for p in &c.points[1..] {
        if p.time_s - trailing >= delta_s - TIME_EPS_S {
            nodes.push(TrajectoryNode {
                event_time_s: p.time_s,
                kind: c.kind,
            });
        }
        trailing = p.time_s;
    }
    nodes
}

/// Interval between leaving one node and arriving at the next.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeSpan {
    pub t_a: f64,
    pub t_b: f64,
}

impl EdgeSpan {
    /// Zero-length spans are allowed; they integrate to zero.
    pub fn new(t_a: f64, t_b: f64) -> Result<Self, TrajError> {
        if !(t_a <= t_b) {
            return Err(TrajError::InvalidArgument(format!(
                "span start {t_a} after end {t_b}"
            )));
        }
        Ok(Self { t_a, t_b })
    }
}

/// Left-rectangle distance in meters: the sum of `speed_l * (t_{l+1} - t_l)`
/// over samples with `t_a <= t_l < t_b`, speed converted from km/h.
pub fn segment_distance(speed: &SpeedSeries, span: EdgeSpan) -> f64 {
    let s = speed.samples();
    let start = s.partition_point(|x| x.time_s < span.t_a);
    let mut total = 0.0;
    for l in start..s.len().saturating_sub(1) {
        if s[l].time_s >= span.t_b {
            break;
        }
        total += s[l].value / KMH_PER_MPS * (s[l + 1].time_s - s[l].time_s);
    }
    total
}

/// Deletes the earlier node of every consecutive pair closer than
/// `min_edge_m` (less [`MERGE_REL_EPS`]), re-checking the pair that the deletion creates.
pub fn merge_nodes(
    nodes: &[TrajectoryNode],
    speed: &SpeedSeries,
    min_edge_m: f64,
) -> Vec<TrajectoryNode> {
    let limit = min_edge_m * (1.0 - MERGE_REL_EPS);
    let mut kept: Vec<TrajectoryNode> = Vec::with_capacity(nodes.len());
    for &node in nodes {
        while let Some(last) = kept.last() {
            let span = EdgeSpan {
                t_a: last.event_time_s,
                t_b: node.event_time_s.max(last.event_time_s),
            };
            if segment_distance(speed, span) < limit {
                kept.pop();
            } else {
                break;
            }
        }
        kept.push(node);
    }
    kept
}

/// Reconstructed trajectory: time-ordered nodes and the driven distance
/// between each consecutive pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryGraph {
    pub nodes: Vec<TrajectoryNode>,
    pub edge_weights_m: Vec<f64>,
}

impl TrajectoryGraph {
    /// Line graph with the given weights and placeholder node times.
    pub fn from_edge_weights(weights: Vec<f64>) -> Self {
        let nodes = (0..=weights.len())
            .map(|i| TrajectoryNode {
                event_time_s: i as f64,
                kind: EventKind::Turn,
            })
            .collect();
        Self {
            nodes,
            edge_weights_m: weights,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_weights_m.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryConfig {
    /// Pedal readings within this distance of the idle value count as idle.
    pub pedal_idle_tolerance: f64,
    /// Also emit a node for the very first candidate of each kind.
    pub include_first_event: bool,
    pub gap_scale: GapScale,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            pedal_idle_tolerance: 0.5,
            include_first_event: false,
            gap_scale: GapScale::default(),
        }
    }
}

/// Intermediate counts from one reconstruction, for logging.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildReport {
    pub stop_candidates: usize,
    pub turn_candidates: usize,
    pub delta_stop_s: Option<f64>,
    pub delta_turn_s: Option<f64>,
    pub pre_merge_nodes: usize,
}

fn nodes_of_kind(c: &CandidateSet, cfg: &TrajectoryConfig) -> (Vec<TrajectoryNode>, Option<f64>) {
    let delta = match gap_series(c) {
        Ok(gaps) if gaps.gaps.len() == 1 => Some(gaps.gaps[0]),
        Ok(gaps) => compute_threshold_with(&gaps, cfg.gap_scale)
            .ok()
            .map(|t| t.delta_s),
        Err(_) => None,
    };
    let mut nodes = Vec::new();
    if cfg.include_first_event {
        if let Some(first) = c.points.first() {
            nodes.push(TrajectoryNode {
                event_time_s: first.time_s,
                kind: c.kind,
            });
        }
    }
    if let Some(delta) = delta {
        nodes.extend(extract_nodes(c, delta));
    }
    (nodes, delta)
}

pub fn build_trajectory(
    log: &CanLog,
    min_edge_m: f64,
    cfg: &TrajectoryConfig,
) -> Result<TrajectoryGraph, TrajError> {
    build_trajectory_with_report(log, min_edge_m, cfg).map(|(g, _)| g)
}

pub fn build_trajectory_with_report(
    log: &CanLog,
    min_edge_m: f64,
    cfg: &TrajectoryConfig,
) -> Result<(TrajectoryGraph, BuildReport), TrajError> {
    if !(min_edge_m > 0.0) || !min_edge_m.is_finite() {
        return Err(TrajError::InvalidArgument(format!(
            "min_edge_m must be positive, got {min_edge_m}"
        )));
    }
    let stops = stop_candidates(&log.speed);
    let turns = turn_candidates(&log.pedal, cfg.pedal_idle_tolerance);
    let ((stop_nodes, delta_stop_s), (turn_nodes, delta_turn_s)) =
        rayon::join(|| nodes_of_kind(&stops, cfg), || nodes_of_kind(&turns, cfg));

    let mut nodes = stop_nodes;
    nodes.extend(turn_nodes);
    // on equal times the stop sorts last, so it is the one merging keeps
    nodes.sort_by(|a, b| {
        a.event_time_s
            .total_cmp(&b.event_time_s)
            .then_with(|| (a.kind == EventKind::Stop).cmp(&(b.kind == EventKind::Stop)))
    });
    let pre_merge_nodes = nodes.len();
    let nodes = merge_nodes(&nodes, &log.speed, min_edge_m);
    debug!(
        "stop_candidates={} turn_candidates={} pre_merge={} merged={}",
        stops.points.len(),
        turns.points.len(),
        pre_merge_nodes,
        nodes.len()
    );
    if nodes.len() < 2 {
        return Err(TrajError::TooFewNodes { found: nodes.len() });
    }
    let edge_weights_m = nodes
        .windows(2)
        .map(|w| {
            segment_distance(
                &log.speed,
                EdgeSpan {
                    t_a: w[0].event_time_s,
                    t_b: w[1].event_time_s,
                },
            )
        })
        .collect();
    let report = BuildReport {
        stop_candidates: stops.points.len(),
        turn_candidates: turns.points.len(),
        delta_stop_s,
        delta_turn_s,
        pre_merge_nodes,
    };
    Ok((
        TrajectoryGraph {
            nodes,
            edge_weights_m,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(pairs: &[(f64, f64)]) -> Vec<CanSample> {
        pairs.iter().map(|&(t, v)| CanSample::new(t, v)).collect()
    }

    fn speed(pairs: &[(f64, f64)]) -> SpeedSeries {
        SpeedSeries::new(samples(pairs)).unwrap()
    }

    fn times(nodes: &[TrajectoryNode]) -> Vec<f64> {
        nodes.iter().map(|n| n.event_time_s).collect()
    }

    #[test]
    fn stop_candidates_are_zero_speed() {
        let c = stop_candidates(&speed(&[(0.0, 0.0), (0.1, 5.0), (0.2, 0.0)]));
        assert_eq!(c.points, samples(&[(0.0, 0.0), (0.2, 0.0)]));
        assert!(stop_candidates(&speed(&[(0.0, 3.0), (0.1, 5.0)])).is_empty());
    }

    #[test]
    fn turn_candidates_at_idle() {
        let pedal = PedalSeries::new(samples(&[(0.0, 14.0), (0.1, 14.0), (0.2, 30.0)])).unwrap();
        let c = turn_candidates(&pedal, 0.0);
        assert_eq!(c.points, samples(&[(0.0, 14.0), (0.1, 14.0)]));
        let jitter = PedalSeries::new(samples(&[(0.0, 14.0), (0.1, 14.4), (0.2, 15.0)])).unwrap();
        assert_eq!(turn_candidates(&jitter, 0.5).points.len(), 2);
    }

    #[test]
    fn gaps_between_candidates() {
        let c = CandidateSet {
            kind: EventKind::Stop,
            points: samples(&[(0.0, 0.0), (0.1, 0.0), (45.3, 0.0)]),
        };
        let g = gap_series(&c).unwrap();
        assert_eq!(g.gaps.len(), 2);
        assert!((g.gaps[0] - 0.1).abs() < 1e-12);
        assert!((g.gaps[1] - 45.2).abs() < 1e-12);

        let one = CandidateSet {
            kind: EventKind::Stop,
            points: samples(&[(1.0, 0.0)]),
        };
        assert_eq!(
            gap_series(&one),
            Err(TrajError::InsufficientData {
                needed: 2,
                found: 1
            })
        );
        let two = CandidateSet {
            kind: EventKind::Stop,
            points: samples(&[(1.0, 0.0), (2.0, 0.0)]),
        };
        assert_eq!(gap_series(&two).unwrap().gaps.len(), 1);
    }

    #[test]
    fn extraction_follows_trailing_index() {
        let c = CandidateSet {
            kind: EventKind::Stop,
            points: samples(&[
                (0.0, 0.0),
                (0.1, 0.0),
                (0.2, 0.0),
                (45.3, 0.0),
                (45.4, 0.0),
                (99.0, 0.0),
            ]),
        };
        assert_eq!(times(&extract_nodes(&c, 1.0)), vec![45.3, 99.0]);

        let single = CandidateSet {
            kind: EventKind::Turn,
            points: samples(&[(5.0, 1.0)]),
        };
        assert!(extract_nodes(&single, 1.0).is_empty());
        assert!(extract_nodes(&c, 100.0).is_empty());
    }

    #[test]
    fn rectangle_distance() {
        // 36 km/h = 10 m/s, 1 s sampling over [0, 100)
        let s: Vec<(f64, f64)> = (0..=100).map(|i| (i as f64, 36.0)).collect();
        let d = segment_distance(&speed(&s), EdgeSpan::new(0.0, 100.0).unwrap());
        assert!((d - 1000.0).abs() < 1e-9);

        let zero: Vec<(f64, f64)> = (0..=100).map(|i| (i as f64, 0.0)).collect();
        assert_eq!(
            segment_distance(&speed(&zero), EdgeSpan::new(0.0, 100.0).unwrap()),
            0.0
        );

        let two: Vec<(f64, f64)> = (0..=100)
            .map(|i| (i as f64, if i < 50 { 36.0 } else { 72.0 }))
            .collect();
        // 50 s * 10 m/s + 50 s * 20 m/s
        let d = segment_distance(&speed(&two), EdgeSpan::new(0.0, 100.0).unwrap());
        assert!((d - 1500.0).abs() < 1e-9);
    }

    #[test]
    fn empty_span_is_zero() {
        let s = speed(&[(0.0, 36.0), (1.0, 36.0)]);
        assert_eq!(segment_distance(&s, EdgeSpan::new(0.5, 0.5).unwrap()), 0.0);
        assert_eq!(segment_distance(&s, EdgeSpan::new(5.0, 9.0).unwrap()), 0.0);
        assert!(EdgeSpan::new(2.0, 1.0).is_err());
    }

    /// Speed trace with 1 s sampling at 36 km/h so distance equals seconds * 10.
    fn cruise(seconds: usize) -> SpeedSeries {
        let s: Vec<(f64, f64)> = (0..=seconds).map(|i| (i as f64, 36.0)).collect();
        speed(&s)
    }

    fn node(t: f64) -> TrajectoryNode {
        TrajectoryNode {
            event_time_s: t,
            kind: EventKind::Stop,
        }
    }

    #[test]
    fn merge_deletes_earlier_node_and_rechecks() {
        // pairwise distances 500, 20, 300 m
        let s = cruise(200);
        let nodes = [node(0.0), node(50.0), node(52.0), node(82.0)];
        let merged = merge_nodes(&nodes, &s, 50.0);
        assert_eq!(times(&merged), vec![0.0, 52.0, 82.0]);
        for w in merged.windows(2) {
            let d = segment_distance(
                &s,
                EdgeSpan::new(w[0].event_time_s, w[1].event_time_s).unwrap(),
            );
            assert!(d >= 50.0);
        }
    }

    #[test]
    fn merge_cascades_through_short_pairs() {
        let s = cruise(200);
        // 10 m steps: every deletion exposes another short pair
        let nodes = [node(0.0), node(1.0), node(2.0), node(3.0), node(100.0)];
        assert_eq!(times(&merge_nodes(&nodes, &s, 50.0)), vec![3.0, 100.0]);
    }

    #[test]
    fn merge_no_op_and_cotimed() {
        let s = cruise(200);
        let nodes = [node(0.0), node(60.0), node(120.0)];
        assert_eq!(merge_nodes(&nodes, &s, 50.0), nodes.to_vec());
        let turn = TrajectoryNode {
            event_time_s: 60.0,
            kind: EventKind::Turn,
        };
        let merged = merge_nodes(&[node(0.0), node(60.0), turn], &s, 50.0);
        assert_eq!(merged, vec![node(0.0), turn]);
    }

    fn log_from(speed_pairs: Vec<(f64, f64)>, pedal_pairs: Vec<(f64, f64)>) -> CanLog {
        CanLog::new(
            SpeedSeries::new(samples(&speed_pairs)).unwrap(),
            PedalSeries::new(samples(&pedal_pairs)).unwrap(),
            "t",
        )
        .unwrap()
    }

    #[test]
    fn constant_speed_has_too_few_nodes() {
        let sp: Vec<(f64, f64)> = (0..1000).map(|i| (i as f64 * 0.1, 50.0)).collect();
        let pe: Vec<(f64, f64)> = (0..1000)
            .map(|i| (i as f64 * 0.1, 20.0 + (i % 7) as f64))
            .collect();
        let log = log_from(sp, pe);
        assert!(matches!(
            build_trajectory(&log, 50.0, &TrajectoryConfig::default()),
            Err(TrajError::TooFewNodes { .. })
        ));
    }

    #[test]
    fn two_stops_eight_hundred_meters_apart() {
        // moving at 10 m/s, stopped for 5 s at t in [10, 15) and [95, 100)
        let mut sp = Vec::new();
        let mut t = 0.0;
        let mut k = 0;
        while t < 110.0 {
            t = k as f64 * 0.1;
            let stopped = (10.0..15.0).contains(&t) || (95.0..100.0).contains(&t);
            sp.push((t, if stopped { 0.0 } else { 36.0 }));
            k += 1;
        }
        let pe: Vec<(f64, f64)> = sp.iter().map(|&(t, _)| (t, 30.0)).collect();
        let mut pe = pe;
        pe[0].1 = 5.0;
        let log = log_from(sp, pe);
        let g = build_trajectory(&log, 100.0, &TrajectoryConfig::default()).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.nodes[0].kind, EventKind::Stop);
        // leaves the first stop at 15.0, reaches the second at 95.0
        assert!(
            (g.edge_weights_m[0] - 800.0).abs() < 1e-6,
            "{:?}",
            g.edge_weights_m
        );
    }

    #[test]
    fn first_event_flag_prepends_first_candidate() {
        let c = CandidateSet {
            kind: EventKind::Stop,
            points: samples(&[(3.0, 0.0), (40.0, 0.0), (90.0, 0.0)]),
        };
        let cfg = TrajectoryConfig {
            include_first_event: true,
            ..Default::default()
        };
        let (nodes, delta) = nodes_of_kind(&c, &cfg);
        assert!(delta.is_some());
        assert_eq!(nodes[0].event_time_s, 3.0);
    }

    #[test]
    fn trajectory_json_shape() {
        let g = TrajectoryGraph::from_edge_weights(vec![100.0]);
        let v = serde_json::to_value(&g).unwrap();
        assert_eq!(v["nodes"][0]["t"], 0.0);
        assert_eq!(v["nodes"][0]["kind"], "turn");
        assert_eq!(v["edge_weights_m"][0], 100.0);
    }
}
