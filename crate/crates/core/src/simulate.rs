//! Synthetic road grids, routes and CAN logs with known ground truth.
//!
//! Logs are built so that the left-rectangle distance integral lands exactly
//! on every road node: the vehicle holds a constant speed over each sampling
//! interval, and the speed on each segment is adjusted so the segment takes a
//! whole number of intervals. Stops hold the speed at zero with the pedal
//! idle. Turns ease off the pedal and slow down over a short approach window,
//! and the pedal touches idle on the sample at the intersection. Idle samples
//! before that point would become extra nodes less than one edge length past
//! the previous node, and merging would then drop the real one. The first
//! node is the exception: nothing precedes it, so its approach is fully idle.
//! End nodes are turns, interior nodes alternate stop and turn. Every log
//! starts already moving, upstream of the first node.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canlog::{CanLog, CanSample, PedalSeries, SpeedSeries};
use crate::geo::LocalFrame;
use crate::metrics::GroundTruth;
use crate::roadnet::{NodeId, RoadEdge, RoadGraph, RoadNode};
use crate::trajgraph::EventKind;

const KMH_PER_MPS: f64 = 3.6;
const MAX_ROUTE_ATTEMPTS: usize = 64;
const MAX_EXPANSIONS_PER_ATTEMPT: usize = 20_000;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid drive profile: {0}")]
    InvalidProfile(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("no simple path with {q} nodes found")]
    NoSuchPath { q: usize },
    #[error("route step {0}-{1} is not a road segment")]
    NotAdjacent(NodeId, NodeId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriveProfile {
    pub cruise_speed_mps: f64,
    pub sample_period_s: f64,
    /// Uniform range `[min, max]` for each stop's dwell time.
    pub stop_dwell_s: [f64; 2],
    /// Speed during a turn as a fraction of cruise.
    pub turn_slowdown: f64,
    /// Slowdown time before a turn.
    pub turn_window_s: f64,
    pub pedal_idle: f64,
    pub pedal_cruise: f64,
    /// Uniform half-width of pedal variation while driving.
    pub pedal_jitter: f64,
    /// Standard deviation of additive speed noise, m/s.
    pub speed_noise_std: f64,
    /// Relative standard deviation of the gap between each segment's mapped
    /// length and the distance actually driven on it (lane position, turn
    /// radius, map error). Unlike per-sample speed noise this does not average
    /// out along the segment.
    pub segment_length_error: f64,
    /// Driving time before the first node and after the last.
    pub lead_in_s: f64,
    pub lead_out_s: f64,
    pub seed: u64,
}

impl Default for DriveProfile {
    fn default() -> Self {
        Self {
            cruise_speed_mps: 10.0,
            sample_period_s: 0.1,
            stop_dwell_s: [3.0, 8.0],
            turn_slowdown: 0.4,
            turn_window_s: 1.0,
            pedal_idle: 14.0,
            pedal_cruise: 30.0,
            pedal_jitter: 3.0,
            speed_noise_std: 0.0,
            segment_length_error: 0.0,
            lead_in_s: 1.5,
            lead_out_s: 1.5,
            seed: 0,
        }
    }
}

impl DriveProfile {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidProfile(m.to_string()));
        if !(self.cruise_speed_mps > 0.0) {
            return bad("cruise_speed_mps must be positive");
        }
        if !(self.sample_period_s > 0.0) {
            return bad("sample_period_s must be positive");
        }
        if !(self.pedal_cruise > self.pedal_idle) {
            return bad("pedal_cruise must exceed pedal_idle");
        }
        if !(self.pedal_idle >= 0.0) || !(self.pedal_jitter >= 0.0) {
            return bad("pedal values must be non-negative");
        }
        let [lo, hi] = self.stop_dwell_s;
        if !(lo > 0.0 && hi >= lo) {
            return bad("stop_dwell_s must be a positive range");
        }
        if !(self.turn_slowdown > 0.0 && self.turn_slowdown <= 1.0) {
            return bad("turn_slowdown must be in (0, 1]");
        }
        if !(self.turn_window_s > 0.0) || !(self.lead_in_s >= 0.0) || !(self.lead_out_s >= 0.0) {
            return bad("turn window and lead times must be non-negative");
        }
        if !(self.speed_noise_std >= 0.0) {
            return bad("speed_noise_std must be non-negative");
        }
        if !(0.0..0.5).contains(&self.segment_length_error) {
            return bad("segment_length_error must be in [0, 0.5)");
        }
        Ok(())
    }

    fn samples_for(&self, seconds: f64) -> usize {
        (seconds / self.sample_period_s).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub ground_truth: GroundTruth,
    pub log: CanLog,
    pub profile: DriveProfile,
    /// Event kind at each ground-truth node.
    pub event_kinds: Vec<EventKind>,
    /// Time at which each node's event completes: the last zero-speed sample
    /// of a stop, or the last idle-pedal sample of a turn.
    pub event_times_s: Vec<f64>,
    /// Distance actually driven on each route segment.
    pub driven_lengths_m: Vec<f64>,
}

/// Random simple path with `q` nodes, found by randomized depth-first
/// extension with backtracking from random start nodes.
pub fn sample_route(g: &RoadGraph, q: usize, seed: u64) -> Result<GroundTruth, SimError> {
    if q < 2 {
        return Err(SimError::NoSuchPath { q });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<usize> = (0..g.node_count())
        .filter(|&i| !g.neighbors(i).is_empty())
        .collect();
    if starts.is_empty() {
        return Err(SimError::NoSuchPath { q });
    }
    for _ in 0..MAX_ROUTE_ATTEMPTS {
        let start = starts[rng.random_range(0..starts.len())];
        if let Some(path) = random_dfs(g, start, q, &mut rng) {
            return Ok(GroundTruth {
                node_ids: path.into_iter().map(|i| g.node_at(i).id).collect(),
            });
        }
    }
    Err(SimError::NoSuchPath { q })
}

fn random_dfs(g: &RoadGraph, start: usize, q: usize, rng: &mut ChaCha8Rng) -> Option<Vec<usize>> {
    let mut path = vec![start];
    let mut on_path = vec![false; g.node_count()];
    on_path[start] = true;
    // per-depth shuffled list of neighbors still to try
    let mut pending: Vec<Vec<usize>> = vec![shuffled_neighbors(g, start, rng)];
    let mut expansions = 0;
    while let Some(options) = pending.last_mut() {
        if path.len() == q {
            return Some(path);
        }
        if expansions >= MAX_EXPANSIONS_PER_ATTEMPT {
            return None;
        }
        match options.pop() {
            Some(next) if !on_path[next] => {
                expansions += 1;
                on_path[next] = true;
                path.push(next);
                pending.push(shuffled_neighbors(g, next, rng));
            }
            Some(_) => {}
            None => {
                pending.pop();
                if let Some(dead) = path.pop() {
                    on_path[dead] = false;
                }
            }
        }
    }
    None
}

fn shuffled_neighbors(g: &RoadGraph, idx: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut n: Vec<usize> = g.neighbors(idx).iter().map(|&(j, _)| j).collect();
    n.shuffle(rng);
    n
}

/// Kind of event simulated at each of `q` route nodes.
pub fn event_plan(q: usize) -> Vec<EventKind> {
    (0..q)
        .map(|i| {
            if i == 0 || i + 1 == q || i % 2 == 0 {
                EventKind::Turn
            } else {
                EventKind::Stop
            }
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq)]
enum Pedal {
    Drive,
    Ease,
    Idle,
}

struct Trace {
    /// True speed over `[t_k, t_k+1)`, m/s.
    speed: Vec<f64>,
    pedal: Vec<Pedal>,
    force_idle_next: bool,
}

impl Trace {
    fn push(&mut self, speed: f64, pedal: Pedal, n: usize) {
        for _ in 0..n {
            let p = if std::mem::take(&mut self.force_idle_next) {
                Pedal::Idle
            } else {
                pedal
            };
            self.pedal.push(p);
            self.speed.push(speed);
        }
    }

    fn len(&self) -> usize {
        self.speed.len()
    }
}

pub fn synthesize_can(
    gt: &GroundTruth,
    g: &RoadGraph,
    profile: &DriveProfile,
) -> Result<SimScenario, SimError> {
    profile.validate()?;
    let q = gt.node_ids.len();
    if q < 2 {
        return Err(SimError::NoSuchPath { q });
    }
    let lengths: Vec<f64> = gt
        .node_ids
        .windows(2)
        .map(|w| {
            g.edge_length(w[0], w[1])
                .ok_or(SimError::NotAdjacent(w[0], w[1]))
        })
        .collect::<Result<_, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let driven: Vec<f64> = if profile.segment_length_error > 0.0 {
        let err = Normal::new(0.0, profile.segment_length_error).expect("std validated");
        lengths
            .iter()
            .map(|&l| l * (1.0 + err.sample(&mut rng)).clamp(0.5, 1.5))
            .collect()
    } else {
        lengths.clone()
    };
    let h = profile.sample_period_s;
    let cruise = profile.cruise_speed_mps;
    let slow = cruise * profile.turn_slowdown;
    let window = profile.samples_for(profile.turn_window_s).max(2);
    let kinds = event_plan(q);

    let mut trace = Trace {
        speed: Vec::new(),
        pedal: Vec::new(),
        force_idle_next: false,
    };
    let mut event_idx = Vec::with_capacity(q);

    let lead_in = profile.samples_for(profile.lead_in_s).max(window + 2);
    if kinds[0] == EventKind::Turn {
        trace.push(cruise, Pedal::Drive, lead_in - window);
        trace.push(slow, Pedal::Idle, window);
        trace.force_idle_next = true;
    } else {
        trace.push(cruise, Pedal::Drive, lead_in);
    }

    for j in 0..q {
        let arrival = trace.len();
        match kinds[j] {
            EventKind::Stop => {
                let [lo, hi] = profile.stop_dwell_s;
                let dwell = if hi > lo {
                    rng.random_range(lo..=hi)
                } else {
                    lo
                };
                let n = profile.samples_for(dwell).max(2);
                trace.push(0.0, Pedal::Idle, n);
                event_idx.push(arrival + n - 1);
            }
            EventKind::Turn => event_idx.push(arrival),
        }
        if j + 1 == q {
            break;
        }
        let length = driven[j];
        let turn_next = kinds[j + 1] == EventKind::Turn;
        let mut n_window = if turn_next { window } else { 0 };
        while n_window > 1 && n_window as f64 * slow * h > length / 2.0 {
            n_window -= 1;
        }
        let remaining = length - n_window as f64 * slow * h;
        let n_cruise = ((remaining / (cruise * h)).ceil() as usize).max(1);
        trace.push(remaining / (n_cruise as f64 * h), Pedal::Drive, n_cruise);
        if turn_next {
            trace.push(slow, Pedal::Ease, n_window);
            trace.force_idle_next = true;
        }
    }
    let lead_out = profile.samples_for(profile.lead_out_s).max(2);
    trace.push(cruise, Pedal::Drive, lead_out);

    let noise = (profile.speed_noise_std > 0.0)
        .then(|| Normal::new(0.0, profile.speed_noise_std).expect("std validated"));
    let floor = 0.1 * cruise;
    let pedal_floor = profile.pedal_idle + 1.0;

    let mut speed = Vec::with_capacity(trace.len());
    let mut pedal = Vec::with_capacity(trace.len());
    for (k, (&v, &state)) in trace.speed.iter().zip(&trace.pedal).enumerate() {
        let t = k as f64 * h;
        let reported = match &noise {
            Some(n) if v > 0.0 => (v + n.sample(&mut rng)).max(floor),
            _ => v,
        };
        speed.push(CanSample::new(t, reported * KMH_PER_MPS));
        let p = match state {
            Pedal::Idle => profile.pedal_idle,
            Pedal::Ease => pedal_floor,
            Pedal::Drive => {
                let jitter = if profile.pedal_jitter > 0.0 {
                    rng.random_range(-profile.pedal_jitter..=profile.pedal_jitter)
                } else {
                    0.0
                };
                (profile.pedal_cruise + jitter).max(pedal_floor)
            }
        };
        pedal.push(CanSample::new(t, p));
    }

    let log = CanLog::new(
        SpeedSeries::new(speed).expect("generated samples are ordered"),
        PedalSeries::new(pedal).expect("generated samples are ordered"),
        format!("sim-seed-{}", profile.seed),
    )
    .expect("generated series are nonempty");

    Ok(SimScenario {
        ground_truth: gt.clone(),
        log,
        profile: profile.clone(),
        event_kinds: kinds,
        event_times_s: event_idx.iter().map(|&k| k as f64 * h).collect(),
        driven_lengths_m: driven,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    /// Nodes per side.
    pub n: usize,
    pub spacing_m: f64,
    /// Relative half-width of the uniform perturbation of each edge length.
    pub jitter: f64,
    pub seed: u64,
    pub origin_lat: f64,
    pub origin_lon: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n: 10,
            spacing_m: 300.0,
            jitter: 0.1,
            seed: 0,
            origin_lat: -33.8688,
            origin_lon: 151.2093,
        }
    }
}

/// `n x n` lattice centered on the origin. Node ids are `row * n + col + 1`.
/// Coordinates sit on the unperturbed lattice; edge lengths carry the jitter.
pub fn make_synthetic_grid(spec: &GridSpec) -> Result<RoadGraph, SimError> {
    if spec.n < 2 {
        return Err(SimError::InvalidGrid("n must be at least 2".into()));
    }
    if !(spec.spacing_m > 0.0) {
        return Err(SimError::InvalidGrid("spacing_m must be positive".into()));
    }
    if !(0.0..1.0).contains(&spec.jitter) {
        return Err(SimError::InvalidGrid("jitter must be in [0, 1)".into()));
    }
    let frame = LocalFrame::new(spec.origin_lat, spec.origin_lon);
    let n = spec.n;
    let half = (n - 1) as f64 * spec.spacing_m / 2.0;
    let id = |r: usize, c: usize| NodeId((r * n + c + 1) as i64);

    let mut nodes = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            let (lat, lon) = frame.to_geo(
                c as f64 * spec.spacing_m - half,
                r as f64 * spec.spacing_m - half,
            );
            nodes.push(RoadNode {
                id: id(r, c),
                lat,
                lon,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut length = || {
        if spec.jitter > 0.0 {
            spec.spacing_m * (1.0 + rng.random_range(-spec.jitter..=spec.jitter))
        } else {
            spec.spacing_m
        }
    };
    let mut edges = Vec::with_capacity(2 * n * (n - 1));
    for r in 0..n {
        for c in 0..n {
            if c + 1 < n {
                edges.push(RoadEdge {
                    u: id(r, c),
                    v: id(r, c + 1),
                    length_m: length(),
                });
            }
            if r + 1 < n {
                edges.push(RoadEdge {
                    u: id(r, c),
                    v: id(r + 1, c),
                    length_m: length(),
                });
            }
        }
    }
    RoadGraph::new(nodes, edges).map_err(|e| SimError::InvalidGrid(e.to_string()))
}
