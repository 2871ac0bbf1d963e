//! Weather-weighted route recommendation over a road graph.
//!
//! Each edge costs its length scaled up by forecast rain at its midpoint,
//! plus a snow penalty when it is raining at or below the snow temperature:
//!
//! ```text
//! cost = length * (1 + alpha * min(precip / p_ref, rain_cap) + beta * [precip > 0 && temp <= t_snow])
//! ```
//!
//! Weather is sampled for the departure date only.

mod geojson;

pub use geojson::parse_geojson;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::forecast_cell;
use crate::geo::GeoPoint;
use crate::store::{CellKey, StoreSnapshot};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RouteError {
    #[error("road graph has no nodes")]
    EmptyGraph,
    #[error("no route between node {from} and node {to}")]
    NoRoute { from: NodeId, to: NodeId },
    #[error("store is empty; weather weighting needs forecasts")]
    EmptyStore,
    #[error("precipitation must be non-negative, got {0}")]
    NegativePrecip(f64),
    #[error("invalid road graph: {0}")]
    BadGraph(String),
    #[error("invalid weather weights: {0}")]
    BadWeights(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
    pub length_km: f64,
}

/// Undirected road network; parallel edges are allowed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoadGraph {
    nodes: Vec<GeoPoint>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(NodeId, usize)>>,
}

impl RoadGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, point: GeoPoint) -> NodeId {
        self.nodes.push(point);
        self.adjacency.push(Vec::new());
        self.nodes.len() - 1
    }

    pub fn add_edge(&mut self, a: NodeId, b: NodeId, length_km: f64) -> Result<usize, RouteError> {
        if a >= self.nodes.len() || b >= self.nodes.len() {
            return Err(RouteError::BadGraph(format!("edge ({a}, {b}) references a missing node")));
        }
        if !(length_km > 0.0) || !length_km.is_finite() {
            return Err(RouteError::BadGraph(format!("edge ({a}, {b}) has length {length_km}")));
        }
        let id = self.edges.len();
        self.edges.push(Edge { a, b, length_km });
        self.adjacency[a].push((b, id));
        if a != b {
            self.adjacency[b].push((a, id));
        }
        Ok(id)
    }

    pub fn nodes(&self) -> &[GeoPoint] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, n: NodeId) -> &[(NodeId, usize)] {
        &self.adjacency[n]
    }

    /// Geographic midpoint of an edge's endpoints (longitudes unwrapped).
    pub fn midpoint(&self, edge: usize) -> GeoPoint {
        let e = self.edges[edge];
        let (p, q) = (self.nodes[e.a], self.nodes[e.b]);
        let mut lon_q = q.lon();
        if lon_q - p.lon() > 180.0 {
            lon_q -= 360.0;
        } else if p.lon() - lon_q > 180.0 {
            lon_q += 360.0;
        }
        GeoPoint::new((p.lat() + q.lat()) / 2.0, (p.lon() + lon_q) / 2.0).expect("midpoint of valid points")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeatherWeights {
    /// Rain penalty coefficient.
    pub alpha: f64,
    /// Reference precipitation, mm.
    pub p_ref: f64,
    /// Cap on `precip / p_ref`.
    pub rain_cap: f64,
    /// Snow penalty coefficient.
    pub beta: f64,
    /// Snow temperature threshold, °C.
    pub t_snow: f64,
}

impl Default for WeatherWeights {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            p_ref: 5.0,
            rain_cap: 4.0,
            beta: 2.0,
            t_snow: 0.0,
        }
    }
}

impl WeatherWeights {
    pub fn validate(&self) -> Result<(), RouteError> {
        let finite = [self.alpha, self.p_ref, self.rain_cap, self.beta, self.t_snow]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.alpha < 0.0 || self.rain_cap < 0.0 || self.beta < 0.0 || !(self.p_ref > 0.0) {
            return Err(RouteError::BadWeights(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn needs_weather(&self) -> bool {
        self.alpha > 0.0 || self.beta > 0.0
    }
}

/// Forecast conditions on one edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct EdgeWeather {
    pub rain_mm: f64,
    pub temp_c: Option<f64>,
}

pub fn edge_cost(
    edge: &Edge,
    precip_mm: f64,
    temp_c: Option<f64>,
    weights: &WeatherWeights,
) -> Result<f64, RouteError> {
    if !(precip_mm >= 0.0) {
        return Err(RouteError::NegativePrecip(precip_mm));
    }
    let rain = weights.alpha * (precip_mm / weights.p_ref).min(weights.rain_cap);
    let snow = match temp_c {
        Some(t) if precip_mm > 0.0 && t <= weights.t_snow => weights.beta,
        _ => 0.0,
    };
    Ok(edge.length_km * (1.0 + rain + snow))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouteLeg {
    pub from: NodeId,
    pub to: NodeId,
    pub length_km: f64,
    pub rain_mm: f64,
    pub temp_c: Option<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouteResult {
    pub nodes: Vec<NodeId>,
    pub coordinates: Vec<GeoPoint>,
    pub total_cost: f64,
    pub total_length: f64,
    pub edges: Vec<RouteLeg>,
    pub depart: NaiveDate,
}

/// Node closest to `point` by haversine distance, ties to the lower id.
pub fn snap_to_node(graph: &RoadGraph, point: GeoPoint) -> Result<NodeId, RouteError> {
    let mut best: Option<(f64, NodeId)> = None;
    for (id, n) in graph.nodes.iter().enumerate() {
        let d = n.haversine_km(&point);
        if best.is_none_or(|b| d < b.0) {
            best = Some((d, id));
        }
    }
    best.map(|b| b.1).ok_or(RouteError::EmptyGraph)
}

/// Samples rain and temperature at every edge midpoint for `date`.
/// Edges without a usable forecast are treated as dry with unknown
/// temperature.
pub fn edge_weather(graph: &RoadGraph, snapshot: &StoreSnapshot, date: NaiveDate) -> Result<Vec<EdgeWeather>, RouteError> {
    if snapshot.is_empty() {
        return Err(RouteError::EmptyStore);
    }
    let mut by_cell: HashMap<CellKey, EdgeWeather> = HashMap::new();
    (0..graph.edges.len())
        .map(|e| {
            let cell = snapshot
                .nearest_cell(graph.midpoint(e))
                .map_err(|_| RouteError::EmptyStore)?;
            Ok(*by_cell.entry(cell).or_insert_with(|| EdgeWeather {
                rain_mm: forecast_cell(snapshot, cell, date, "rainfall")
                    .map(|r| r.value.max(0.0))
                    .unwrap_or(0.0),
                temp_c: forecast_cell(snapshot, cell, date, "temperature").ok().map(|r| r.value),
            }))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct QueueEntry {
    cost: f64,
    node: NodeId,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn path_to(pred: &[Option<(NodeId, usize)>], mut n: NodeId) -> Vec<NodeId> {
    let mut path = vec![n];
    while let Some((p, _)) = pred[n] {
        path.push(p);
        n = p;
    }
    path.reverse();
    path
}

/// Dijkstra between two nodes with per-edge weather. Among equal-cost
/// paths the lexicographically smallest node sequence wins.
pub fn best_path_with(
    graph: &RoadGraph,
    from: NodeId,
    to: NodeId,
    depart: NaiveDate,
    weather: &[EdgeWeather],
    weights: &WeatherWeights,
) -> Result<RouteResult, RouteError> {
    weights.validate()?;
    let n = graph.nodes.len();
    if n == 0 {
        return Err(RouteError::EmptyGraph);
    }
    if from >= n || to >= n {
        return Err(RouteError::BadGraph(format!("node {} does not exist", from.max(to))));
    }
    if weather.len() != graph.edges.len() {
        return Err(RouteError::BadGraph("weather samples do not match edges".into()));
    }
    let costs: Vec<f64> = graph
        .edges
        .iter()
        .zip(weather)
        .map(|(e, w)| edge_cost(e, w.rain_mm, w.temp_c, weights))
        .collect::<Result<_, _>>()?;

    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<(NodeId, usize)>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[from] = 0.0;
    heap.push(QueueEntry { cost: 0.0, node: from });
    while let Some(QueueEntry { cost, node: u }) = heap.pop() {
        if done[u] || cost > dist[u] {
            continue;
        }
        done[u] = true;
        if u == to {
            break;
        }
        for &(v, e) in &graph.adjacency[u] {
            if done[v] {
                continue;
            }
            let c = dist[u] + costs[e];
            let better = if c < dist[v] {
                true
            } else if c == dist[v] {
                let mut via_u = path_to(&pred, u);
                via_u.push(v);
                via_u < path_to(&pred, v)
            } else {
                false
            };
            if better {
                dist[v] = c;
                pred[v] = Some((u, e));
                heap.push(QueueEntry { cost: c, node: v });
            }
        }
    }
    if !dist[to].is_finite() {
        return Err(RouteError::NoRoute { from, to });
    }

    let nodes = path_to(&pred, to);
    let mut legs = Vec::with_capacity(nodes.len().saturating_sub(1));
    let mut cursor = to;
    while let Some((p, e)) = pred[cursor] {
        legs.push(RouteLeg {
            from: p,
            to: cursor,
            length_km: graph.edges[e].length_km,
            rain_mm: weather[e].rain_mm,
            temp_c: weather[e].temp_c,
            cost: costs[e],
        });
        cursor = p;
    }
    legs.reverse();
    Ok(RouteResult {
        coordinates: nodes.iter().map(|&i| graph.nodes[i]).collect(),
        total_cost: legs.iter().map(|l| l.cost).sum(),
        total_length: legs.iter().map(|l| l.length_km).sum(),
        nodes,
        edges: legs,
        depart,
    })
}

/// Snaps both points to the graph and finds the cheapest route under the
/// forecast for `depart`. The store is only consulted when the weights
/// give weather any influence.
pub fn best_path(
    graph: &RoadGraph,
    origin: GeoPoint,
    dest: GeoPoint,
    depart: NaiveDate,
    snapshot: Option<&StoreSnapshot>,
    weights: &WeatherWeights,
) -> Result<RouteResult, RouteError> {
    weights.validate()?;
    let from = snap_to_node(graph, origin)?;
    let to = snap_to_node(graph, dest)?;
    let weather = if weights.needs_weather() {
        edge_weather(graph, snapshot.ok_or(RouteError::EmptyStore)?, depart)?
    } else {
        vec![EdgeWeather::default(); graph.edges.len()]
    };
    best_path_with(graph, from, to, depart, &weather, weights)
}
