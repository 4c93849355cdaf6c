use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RoadEdge, RoadGraph, RoadNetError, RoadNode};

pub const GRAPH_FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct GraphFileRef<'a> {
    version: u32,
    nodes: &'a [RoadNode],
    edges: &'a [RoadEdge],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    #[serde(rename = "version")]
    _version: u32,
    nodes: Vec<RoadNode>,
    edges: Vec<RoadEdge>,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

pub fn save_graph<W: Write>(g: &RoadGraph, sink: W) -> Result<(), RoadNetError> {
    let file = GraphFileRef {
        version: GRAPH_FORMAT_VERSION,
        nodes: g.nodes(),
        edges: g.edges(),
    };
    serde_json::to_writer(sink, &file).map_err(|e| RoadNetError::Io(e.into()))
}

pub fn load_graph<R: Read>(mut source: R) -> Result<RoadGraph, RoadNetError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let probe: VersionProbe =
        serde_json::from_str(&text).map_err(|e| RoadNetError::SchemaMismatch(e.to_string()))?;
    if probe.version != GRAPH_FORMAT_VERSION {
        return Err(RoadNetError::VersionUnsupported(probe.version));
    }
    let file: GraphFile =
        serde_json::from_str(&text).map_err(|e| RoadNetError::SchemaMismatch(e.to_string()))?;
    RoadGraph::new(file.nodes, file.edges)
}

pub fn save_graph_file(g: &RoadGraph, path: &Path) -> Result<(), RoadNetError> {
    let mut w = BufWriter::new(File::create(path)?);
    save_graph(g, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_graph_file(path: &Path) -> Result<RoadGraph, RoadNetError> {
    load_graph(BufReader::new(File::open(path)?))
}
