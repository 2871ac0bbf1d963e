//! Road graphs from GeoJSON.
//!
//! Input is a FeatureCollection of LineString (or MultiLineString) features.
//! Each line becomes one edge between its first and last coordinate.
//! Endpoints are interned on a 1e-6 degree lattice, so lines sharing an
//! endpoint share a node. Edge length is the `length_km` property when
//! present, otherwise the haversine length of the polyline.

use std::collections::HashMap;

use serde_json::Value;

use super::{RoadGraph, RouteError};
use crate::geo::{haversine_km, GeoPoint};

const QUANTUM: f64 = 1e6;

fn bad(msg: impl Into<String>) -> RouteError {
    RouteError::BadGraph(msg.into())
}

fn position(v: &Value) -> Result<(f64, f64), RouteError> {
    let arr = v.as_array().ok_or_else(|| bad("position is not an array"))?;
    match (arr.first().and_then(Value::as_f64), arr.get(1).and_then(Value::as_f64)) {
        (Some(lon), Some(lat)) => Ok((lon, lat)),
        _ => Err(bad("position needs numeric [lon, lat]")),
    }
}

pub fn parse_geojson(text: &str) -> Result<RoadGraph, RouteError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| bad(format!("not JSON: {e}")))?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(bad("expected a FeatureCollection"));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("FeatureCollection without features"))?;

    let mut graph = RoadGraph::new();
    let mut interned: HashMap<(i64, i64), usize> = HashMap::new();
    let mut node_for = |graph: &mut RoadGraph, (lon, lat): (f64, f64)| -> Result<usize, RouteError> {
        let key = ((lat * QUANTUM).round() as i64, (lon * QUANTUM).round() as i64);
        if let Some(&id) = interned.get(&key) {
            return Ok(id);
        }
        let p = GeoPoint::new(lat, lon).map_err(|e| bad(e.to_string()))?;
        let id = graph.add_node(p);
        interned.insert(key, id);
        Ok(id)
    };

    for (fi, f) in features.iter().enumerate() {
        let geom = f.get("geometry").ok_or_else(|| bad(format!("feature {fi} has no geometry")))?;
        let coords = geom.get("coordinates");
        let lines: Vec<&Value> = match geom.get("type").and_then(Value::as_str) {
            Some("LineString") => coords.into_iter().collect(),
            Some("MultiLineString") => coords
                .and_then(Value::as_array)
                .map(|a| a.iter().collect())
                .unwrap_or_default(),
            _ => continue,
        };
        let length_prop = f
            .get("properties")
            .and_then(|p| p.get("length_km"))
            .filter(|v| !v.is_null());
        for line in lines {
            let pts = line
                .as_array()
                .ok_or_else(|| bad(format!("feature {fi} coordinates are not an array")))?
                .iter()
                .map(position)
                .collect::<Result<Vec<_>, _>>()?;
            if pts.len() < 2 {
                return Err(bad(format!("feature {fi} has fewer than two positions")));
            }
            let length = match length_prop {
                Some(v) => v
                    .as_f64()
                    .ok_or_else(|| bad(format!("feature {fi} length_km is not a number")))?,
                None => pts
                    .windows(2)
                    .map(|w| haversine_km(w[0].1, w[0].0, w[1].1, w[1].0))
                    .sum(),
            };
            let a = node_for(&mut graph, pts[0])?;
            let b = node_for(&mut graph, pts[pts.len() - 1])?;
            graph
                .add_edge(a, b, length)
                .map_err(|e| bad(format!("feature {fi}: {e}")))?;
        }
    }
    Ok(graph)
}
