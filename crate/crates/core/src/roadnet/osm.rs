use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;

use log::debug;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{NodeId, RoadEdge, RoadGraph, RoadNetError, RoadNode};
use crate::geo::haversine_m;

const DRIVABLE: [&str; 9] = [
    "motorway",
    "trunk",
    "primary",
    "secondary",
    "tertiary",
    "residential",
    "unclassified",
    "living_street",
    "service",
];

/// Accepts ways whose `highway` tag is in an allow-list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HighwayFilter {
    allowed: BTreeSet<String>,
}

impl Default for HighwayFilter {
    /// Drivable classes plus their `_link` variants.
    fn default() -> Self {
        let mut allowed = BTreeSet::new();
        for class in DRIVABLE {
            allowed.insert(class.to_string());
            allowed.insert(format!("{class}_link"));
        }
        Self { allowed }
    }
}

impl HighwayFilter {
    pub fn from_classes<I, S>(classes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            allowed: classes.into_iter().map(Into::into).collect(),
        }
    }

    pub fn accepts(&self, tags: &BTreeMap<String, String>) -> bool {
        tags.get("highway")
            .is_some_and(|h| self.allowed.contains(h))
    }
}

struct Way {
    id: i64,
    refs: Vec<i64>,
    tags: BTreeMap<String, String>,
}

fn xml_err(e: impl std::fmt::Display) -> RoadNetError {
    RoadNetError::XmlMalformed(e.to_string())
}

fn attrs(e: &BytesStart<'_>) -> Result<HashMap<String, String>, RoadNetError> {
    let mut out = HashMap::new();
    for attr in e.attributes() {
        let attr = attr.map_err(xml_err)?;
        let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
        let value = attr.unescape_value().map_err(xml_err)?.into_owned();
        out.insert(key, value);
    }
    Ok(out)
}

fn required<T: std::str::FromStr>(
    map: &HashMap<String, String>,
    key: &str,
    element: &str,
) -> Result<T, RoadNetError> {
    map.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| RoadNetError::XmlMalformed(format!("<{element}> without valid `{key}`")))
}

/// Reads raw OSM nodes and ways.
fn read_osm<R: BufRead>(raw: R) -> Result<(HashMap<i64, (f64, f64)>, Vec<Way>), RoadNetError> {
    let mut reader = Reader::from_reader(raw);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();
    let mut nodes = HashMap::new();
    let mut ways = Vec::new();
    let mut current: Option<Way> = None;
    let mut depth = 0usize;
    let mut saw_root = false;

    loop {
        let event = reader.read_event_into(&mut buf).map_err(xml_err)?;
        let (element, is_empty) = match &event {
            Event::Start(e) => (Some(e), false),
            Event::Empty(e) => (Some(e), true),
            Event::End(e) => {
                depth = depth.saturating_sub(1);
                if e.name().as_ref() == b"way" {
                    if let Some(way) = current.take() {
                        ways.push(way);
                    }
                }
                (None, false)
            }
            Event::Eof => break,
            _ => (None, false),
        };
        if let Some(e) = element {
            saw_root = true;
            if !is_empty {
                depth += 1;
            }
            match e.name().as_ref() {
                b"node" => {
                    let a = attrs(e)?;
                    let id: i64 = required(&a, "id", "node")?;
                    let lat: f64 = required(&a, "lat", "node")?;
                    let lon: f64 = required(&a, "lon", "node")?;
                    nodes.insert(id, (lat, lon));
                }
                b"way" => {
                    let a = attrs(e)?;
                    let way = Way {
                        id: required(&a, "id", "way")?,
                        refs: Vec::new(),
                        tags: BTreeMap::new(),
                    };
                    if is_empty {
                        ways.push(way);
                    } else {
                        current = Some(way);
                    }
                }
                b"nd" => {
                    if let Some(way) = current.as_mut() {
                        way.refs.push(required(&attrs(e)?, "ref", "nd")?);
                    }
                }
                b"tag" => {
                    if let Some(way) = current.as_mut() {
                        let a = attrs(e)?;
                        if let (Some(k), Some(v)) = (a.get("k"), a.get("v")) {
                            way.tags.insert(k.clone(), v.clone());
                        }
                    }
                }
                _ => {}
            }
        }
        buf.clear();
    }
    if depth != 0 || !saw_root {
        return Err(RoadNetError::XmlMalformed(
            "unexpected end of document".into(),
        ));
    }
    Ok((nodes, ways))
}

/// Builds an intersection graph from OSM XML.
///
/// Ways rejected by `filter` are dropped. Polylines are split wherever a node
/// has other than two distinct neighbors, so chains of degree-2 nodes collapse
/// into a single edge whose length is the summed haversine length of the chain.
pub fn parse_osm_xml<R: BufRead>(
    raw: R,
    filter: &HighwayFilter,
) -> Result<RoadGraph, RoadNetError> {
    let (coords, ways) = read_osm(raw)?;
    let drivable: Vec<&Way> = ways.iter().filter(|w| filter.accepts(&w.tags)).collect();
    if drivable.is_empty() {
        return Err(RoadNetError::NoDrivableWays);
    }

    let mut neighbors: BTreeMap<i64, BTreeSet<i64>> = BTreeMap::new();
    for way in &drivable {
        for &r in &way.refs {
            if !coords.contains_key(&r) {
                return Err(RoadNetError::DanglingNodeRef {
                    way: way.id,
                    node: r,
                });
            }
        }
        for pair in way.refs.windows(2) {
            if pair[0] != pair[1] {
                neighbors.entry(pair[0]).or_default().insert(pair[1]);
                neighbors.entry(pair[1]).or_default().insert(pair[0]);
            }
        }
    }

    let is_junction = |id: i64| neighbors.get(&id).map_or(0, BTreeSet::len) != 2;
    let hop = |a: i64, b: i64| {
        let (la, lo) = coords[&a];
        let (lb, lob) = coords[&b];
        haversine_m(la, lo, lb, lob)
    };

    let mut edges = Vec::new();
    let mut used = BTreeSet::new();
    for (&start, adj) in neighbors.iter().filter(|(&id, _)| is_junction(id)) {
        for &first in adj {
            let (mut prev, mut cur) = (start, first);
            let mut length = hop(start, first);
            let mut steps = 0usize;
            while !is_junction(cur) && steps <= neighbors.len() {
                let next = *neighbors[&cur]
                    .iter()
                    .find(|&&n| n != prev)
                    .expect("degree-2 node has a second neighbor");
                length += hop(cur, next);
                prev = cur;
                cur = next;
                steps += 1;
            }
            if cur == start || length <= 0.0 {
                // rings hanging off a single junction carry no usable segment
                continue;
            }
            used.insert(start);
            used.insert(cur);
            edges.push(RoadEdge {
                u: NodeId(start),
                v: NodeId(cur),
                length_m: length,
            });
        }
    }
    debug!(
        "osm_nodes={} drivable_ways={} junctions={} edges={}",
        coords.len(),
        drivable.len(),
        used.len(),
        edges.len()
    );

    let nodes = used
        .into_iter()
        .map(|id| {
            let (lat, lon) = coords[&id];
            RoadNode {
                id: NodeId(id),
                lat,
                lon,
            }
        })
        .collect();
    RoadGraph::new(nodes, edges)
}
