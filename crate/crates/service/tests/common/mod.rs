#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request};
use axum::Router;
use chrono::{Datelike, NaiveDate};
use http_body_util::BodyExt;
use skycast_core::recsys::{InteractionMatrix, LocationRecord};
use skycast_core::router::{parse_geojson, RoadGraph};
use skycast_core::StoreSnapshot;
use skycast_service::{router, AppState, VERSION_HEADER};
use skycast_testkit::fixtures;
use tower::ServiceExt;

/// Last observation day in the fixture; forecasts for the next day use
/// persistence.
pub const LAST_DAY: NaiveDate = NaiveDate::from_ymd_opt(fixtures::LAST_DAY.0, fixtures::LAST_DAY.1, fixtures::LAST_DAY.2).unwrap();
pub const DEPART: NaiveDate = NaiveDate::from_ymd_opt(2011, 3, 2).unwrap();

#[allow(unused_imports)]
pub use fixtures::{last_day_rain, last_day_temp, DIAMOND_GEOJSON as GRAPH};

pub fn fixture_snapshot() -> StoreSnapshot {
    StoreSnapshot::empty().ingest_csv(&fixtures::climate_csv(), "fixture").unwrap()
}

pub fn fixture_graph() -> RoadGraph {
    parse_geojson(GRAPH).unwrap()
}

pub fn locations() -> Vec<LocationRecord> {
    serde_json::from_str(fixtures::LOCATIONS_JSON).unwrap()
}

pub fn fixture_matrix() -> InteractionMatrix {
    InteractionMatrix::from_locations(&locations()).unwrap()
}

pub fn fixture_state() -> Arc<AppState> {
    Arc::new(AppState::new(fixture_snapshot(), fixture_matrix(), Some(fixture_graph())))
}

pub fn app(state: &Arc<AppState>) -> Router {
    router(state.clone(), None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub status: u16,
    pub version: Option<u64>,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body)
            .unwrap_or_else(|e| panic!("{e}: {:?}", String::from_utf8_lossy(&self.body)))
    }

    pub fn error_code(&self) -> String {
        self.json()["error"].as_str().expect("error body").to_string()
    }
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<&str>) -> Reply {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status().as_u16();
    let header = |name: &str| resp.headers().get(name).map(|v| v.to_str().unwrap().to_string());
    let version = header(VERSION_HEADER).map(|v| v.parse().unwrap());
    let content_type = header("content-type");
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply {
        status,
        version,
        content_type,
        body,
    }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    call(app, Method::GET, uri, None).await
}

pub async fn post(app: &Router, uri: &str, body: &str) -> Reply {
    call(app, Method::POST, uri, Some(body)).await
}

pub fn date_param(d: NaiveDate) -> String {
    format!("{:04}-{:02}-{:02}", d.year(), d.month(), d.day())
}

/// Serves `state` on an ephemeral port from a background runtime.
pub fn spawn_server(state: Arc<AppState>) -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router(state, None)).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

/// Minimal blocking HTTP/1.1 GET.
pub fn http_get(addr: SocketAddr, path: &str) -> Reply {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut raw = Vec::new();
    s.read_to_end(&mut raw).unwrap();
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").expect("header end");
    let head = String::from_utf8(raw[..split].to_vec()).unwrap();
    let mut body = raw[split + 4..].to_vec();
    let mut lines = head.split("\r\n");
    let status = lines.next().unwrap().split(' ').nth(1).unwrap().parse().unwrap();
    let mut reply = Reply {
        status,
        version: None,
        content_type: None,
        body: Vec::new(),
    };
    let mut chunked = false;
    for line in lines {
        let (k, v) = line.split_once(':').unwrap();
        let (k, v) = (k.trim().to_ascii_lowercase(), v.trim());
        match k.as_str() {
            VERSION_HEADER => reply.version = Some(v.parse().unwrap()),
            "content-type" => reply.content_type = Some(v.to_string()),
            "transfer-encoding" => chunked = v.eq_ignore_ascii_case("chunked"),
            _ => {}
        }
    }
    if chunked {
        let mut out = Vec::new();
        let mut rest = &body[..];
        loop {
            let eol = rest.windows(2).position(|w| w == b"\r\n").unwrap();
            let size = usize::from_str_radix(std::str::from_utf8(&rest[..eol]).unwrap().trim(), 16).unwrap();
            if size == 0 {
                break;
            }
            out.extend_from_slice(&rest[eol + 2..eol + 2 + size]);
            rest = &rest[eol + 4 + size..];
        }
        body = out;
    }
    reply.body = body;
    reply
}
