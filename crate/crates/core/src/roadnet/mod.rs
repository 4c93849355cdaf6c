//! Undirected weighted road networks: intersections joined by segments whose
//! weight is the driven length in meters.

mod io;
mod osm;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::LocalFrame;

pub use io::{load_graph, load_graph_file, save_graph, save_graph_file, GRAPH_FORMAT_VERSION};
pub use osm::{parse_osm_xml, HighwayFilter};

#[derive(Debug, Error)]
pub enum RoadNetError {
    #[error("malformed OSM XML: {0}")]
    XmlMalformed(String),
    #[error("no drivable ways in input")]
    NoDrivableWays,
    #[error("way {way} references missing node {node}")]
    DanglingNodeRef { way: i64, node: i64 },
    #[error("graph file does not match schema: {0}")]
    SchemaMismatch(String),
    #[error("unsupported graph format version {0}")]
    VersionUnsupported(u32),
    #[error("window contains no road segments")]
    EmptyResult,
    #[error("invalid node {id}: {reason}")]
    InvalidNode { id: NodeId, reason: String },
    #[error("invalid edge {u}-{v}: {reason}")]
    InvalidEdge {
        u: NodeId,
        v: NodeId,
        reason: String,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Stable road node identifier (OSM node id for ingested maps).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub i64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadNode {
    pub id: NodeId,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadEdge {
    pub u: NodeId,
    pub v: NodeId,
    pub length_m: f64,
}

/// Immutable simple graph. Nodes are kept sorted by id, edges canonically as
/// `u < v` sorted by `(u, v)`, and adjacency lists sorted by neighbor index.
#[derive(Debug, Clone)]
pub struct RoadGraph {
    nodes: Vec<RoadNode>,
    edges: Vec<RoadEdge>,
    index: HashMap<NodeId, usize>,
    adjacency: Vec<Vec<(usize, f64)>>,
    min_edge_length_m: Option<f64>,
}

impl PartialEq for RoadGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl RoadGraph {
    /// Validates and canonicalizes. Parallel edges collapse to the shortest.
    pub fn new(mut nodes: Vec<RoadNode>, edges: Vec<RoadEdge>) -> Result<Self, RoadNetError> {
        nodes.sort_by_key(|n| n.id);
        for pair in nodes.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(RoadNetError::InvalidNode {
                    id: pair[0].id,
                    reason: "duplicate id".into(),
                });
            }
        }
        for n in &nodes {
            if !(-90.0..=90.0).contains(&n.lat) || !(-180.0..=180.0).contains(&n.lon) {
                return Err(RoadNetError::InvalidNode {
                    id: n.id,
                    reason: format!("coordinates out of range ({}, {})", n.lat, n.lon),
                });
            }
        }
        let index: HashMap<NodeId, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();

        let mut unique: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
        for e in edges {
            let invalid = |reason: &str| RoadNetError::InvalidEdge {
                u: e.u,
                v: e.v,
                reason: reason.to_string(),
            };
            if e.u == e.v {
                return Err(invalid("self loop"));
            }
            if !(e.length_m > 0.0) || !e.length_m.is_finite() {
                return Err(invalid("length must be positive"));
            }
            if !index.contains_key(&e.u) || !index.contains_key(&e.v) {
                return Err(invalid("unknown endpoint"));
            }
            let key = (e.u.min(e.v), e.u.max(e.v));
            unique
                .entry(key)
                .and_modify(|len| *len = len.min(e.length_m))
                .or_insert(e.length_m);
        }

        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut out = Vec::with_capacity(unique.len());
        for ((u, v), length_m) in unique {
            let (iu, iv) = (index[&u], index[&v]);
            adjacency[iu].push((iv, length_m));
            adjacency[iv].push((iu, length_m));
            out.push(RoadEdge { u, v, length_m });
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(n, _)| n);
        }
        let min_edge_length_m = out.iter().map(|e| e.length_m).reduce(f64::min);

        Ok(Self {
            nodes,
            edges: out,
            index,
            adjacency,
            min_edge_length_m,
        })
    }

    pub fn nodes(&self) -> &[RoadNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[RoadEdge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Shortest segment length, `None` for an edgeless graph.
    pub fn min_edge_length_m(&self) -> Option<f64> {
        self.min_edge_length_m
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn node(&self, id: NodeId) -> Option<&RoadNode> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    pub fn node_at(&self, idx: usize) -> &RoadNode {
        &self.nodes[idx]
    }

    /// `(neighbor index, length_m)` pairs sorted by neighbor index.
    pub fn neighbors(&self, idx: usize) -> &[(usize, f64)] {
        &self.adjacency[idx]
    }

    pub fn edge_length(&self, a: NodeId, b: NodeId) -> Option<f64> {
        let (ia, ib) = (self.index_of(a)?, self.index_of(b)?);
        self.adjacency[ia]
            .binary_search_by_key(&ib, |&(n, _)| n)
            .ok()
            .map(|pos| self.adjacency[ia][pos].1)
    }

    /// Keeps the nodes inside a `side_km` square centered on `(lat, lon)` and
    /// the edges between them.
    pub fn bbox_filter(&self, lat: f64, lon: f64, side_km: f64) -> Result<RoadGraph, RoadNetError> {
        if !(side_km > 0.0) || !side_km.is_finite() {
            return Err(RoadNetError::InvalidArgument(format!(
                "side_km must be positive, got {side_km}"
            )));
        }
        let frame = LocalFrame::new(lat, lon);
        let half = side_km * 1000.0 / 2.0;
        let nodes: Vec<RoadNode> = self
            .nodes
            .iter()
            .filter(|n| {
                let (e, no) = frame.to_local(n.lat, n.lon);
                e.abs() <= half && no.abs() <= half
            })
            .copied()
            .collect();
        let keep: HashSet<NodeId> = nodes.iter().map(|n| n.id).collect();
        let edges: Vec<RoadEdge> = self
            .edges
            .iter()
            .filter(|e| keep.contains(&e.u) && keep.contains(&e.v))
            .copied()
            .collect();
        if edges.is_empty() {
            return Err(RoadNetError::EmptyResult);
        }
        RoadGraph::new(nodes, edges)
    }
}
