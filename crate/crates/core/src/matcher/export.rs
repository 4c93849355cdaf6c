use serde_json::{json, Value};

use super::AttackResult;
use crate::roadnet::RoadGraph;

/// FeatureCollection with one LineString per ranked candidate. Coordinates are
/// `[lon, lat]`. Candidates referencing nodes absent from `g` are skipped.
pub fn to_geojson(result: &AttackResult, g: &RoadGraph) -> Value {
    let features: Vec<Value> = result
        .candidates
        .iter()
        .enumerate()
        .filter_map(|(rank, c)| {
            let coords: Option<Vec<Value>> = c
                .node_ids
                .iter()
                .map(|id| g.node(*id).map(|n| json!([n.lon, n.lat])))
                .collect();
            Some(json!({
                "type": "Feature",
                "geometry": { "type": "LineString", "coordinates": coords? },
                "properties": {
                    "rank": rank + 1,
                    "theta_m": c.theta_m,
                    "sigma_used": c.sigma_used,
                    "node_ids": c.node_ids,
                },
            }))
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}
