//! `/v1` handlers. Each request loads the current snapshot exactly once and
//! reports its version in the `x-snapshot-version` header.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use skycast_core::cluster::ClusterError;
use skycast_core::forecast::{forecast_at, ForecastError};
use skycast_core::recsys::{RecError, RecommendParams, Recommendation};
use skycast_core::render::{encode_ppm, RenderError};
use skycast_core::router::{best_path, RouteError};
use skycast_core::store::StoreError;
use skycast_core::time::parse_date;
use skycast_core::GeoPoint;
use tower_http::services::ServeDir;

use crate::grid::{forecast_field, GridError, GridRequest};
use crate::state::AppState;

pub const VERSION_HEADER: &str = "x-snapshot-version";
pub const DEFAULT_CLUSTERS: usize = 5;
const MAX_SCALE: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    fn store_empty() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "store_empty", "no snapshot has been ingested")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

fn store_error(e: StoreError) -> ApiError {
    match e {
        StoreError::EmptyStore => ApiError::store_empty(),
        StoreError::UnknownVariable(v) => ApiError::bad("unknown_variable", format!("unknown variable {v:?}")),
        other => ApiError::internal(other.to_string()),
    }
}

fn forecast_error(e: ForecastError) -> ApiError {
    match e {
        ForecastError::EmptyStore => ApiError::store_empty(),
        ForecastError::NoData(m) => ApiError::new(StatusCode::NOT_FOUND, "no_data", m),
        ForecastError::Store(s) => store_error(s),
        other => ApiError::internal(other.to_string()),
    }
}

fn with_version(version: u64, result: Result<Response, ApiError>) -> Response {
    let mut r = result.unwrap_or_else(IntoResponse::into_response);
    r.headers_mut().insert(VERSION_HEADER, HeaderValue::from(version));
    r
}

type RawQuery = Result<Query<HashMap<String, String>>, QueryRejection>;

/// Query parameters; anything not asked for is ignored.
struct Params(HashMap<String, String>);

impl Params {
    fn from(q: RawQuery) -> Result<Self, ApiError> {
        q.map(|Query(m)| Params(m)).map_err(|e| ApiError::bad("bad_request", e.body_text()))
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|s| s.trim()).filter(|s| !s.is_empty())
    }

    fn required(&self, key: &str) -> Result<&str, ApiError> {
        self.get(key)
            .ok_or_else(|| ApiError::bad("missing_param", format!("missing query parameter {key:?}")))
    }

    fn number<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ApiError> {
        self.get(key)
            .map(|v| v.parse().map_err(|_| ApiError::bad("bad_request", format!("{key}={v:?} is not a number"))))
            .transpose()
    }

    fn point(&self, lat_key: &str, lon_key: &str) -> Result<GeoPoint, ApiError> {
        let parse = |k: &str| -> Result<f64, ApiError> {
            let v = self.required(k)?;
            v.parse::<f64>()
                .map_err(|_| ApiError::bad("bad_coords", format!("{k}={v:?} is not a number")))
        };
        let (lat, lon) = (parse(lat_key)?, parse(lon_key)?);
        if !(-180.0..=180.0).contains(&lon) {
            return Err(ApiError::bad("bad_coords", format!("longitude {lon} is outside [-180, 180]")));
        }
        GeoPoint::new(lat, lon).map_err(|e| ApiError::bad("bad_coords", e.to_string()))
    }

    fn date(&self, key: &str) -> Result<Option<NaiveDate>, ApiError> {
        self.get(key)
            .map(|v| parse_date(v).ok_or_else(|| ApiError::bad("bad_date", format!("{key}={v:?} is not a date"))))
            .transpose()
    }

    fn required_date(&self, key: &str) -> Result<NaiveDate, ApiError> {
        self.required(key)?;
        Ok(self.date(key)?.expect("checked present"))
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))
}

fn json<T: Serialize>(value: &T) -> Result<Response, ApiError> {
    Ok(Json(value).into_response())
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    snapshot_version: u64,
}

async fn healthz(State(s): State<Arc<AppState>>) -> Response {
    let version = s.snapshot().version();
    with_version(
        version,
        json(&Health {
            status: "ok",
            snapshot_version: version,
        }),
    )
}

async fn forecast(State(s): State<Arc<AppState>>, q: RawQuery) -> Response {
    let snap = s.snapshot();
    let run = || {
        let p = Params::from(q)?;
        let point = p.point("lat", "lon")?;
        let date = p.required_date("date")?;
        let var = p.required("var")?;
        let report = forecast_at(&snap, point, date, var).map_err(forecast_error)?;
        json(&report)
    };
    with_version(snap.version(), run())
}

async fn route(State(s): State<Arc<AppState>>, q: RawQuery) -> Response {
    let snap = s.snapshot();
    let version = snap.version();
    let run = async {
        let p = Params::from(q)?;
        let from = p.point("from_lat", "from_lon")?;
        let to = p.point("to_lat", "to_lon")?;
        let depart = p.required_date("depart")?;
        let graph = s.graph.clone().ok_or_else(|| {
            ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "graph_missing", "no road graph is loaded")
        })?;
        let weights = s.weights;
        let result = blocking(move || best_path(&graph, from, to, depart, Some(&snap), &weights)).await?;
        match result {
            Ok(r) => json(&r),
            Err(RouteError::NoRoute { from, to }) => Err(ApiError::new(
                StatusCode::NOT_FOUND,
                "no_route",
                format!("no route between nodes {from} and {to}"),
            )),
            Err(RouteError::EmptyGraph) => Err(ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "graph_missing",
                "the road graph has no nodes",
            )),
            Err(RouteError::EmptyStore) => Err(ApiError::store_empty()),
            Err(e) => Err(ApiError::internal(e.to_string())),
        }
    };
    with_version(version, run.await)
}

#[derive(Serialize)]
struct RecommendationList {
    user: String,
    date: NaiveDate,
    lambda: f64,
    recommendations: Vec<Recommendation>,
}

fn rec_error(e: RecError) -> ApiError {
    match e {
        RecError::UnknownUser(u) => ApiError::new(StatusCode::NOT_FOUND, "unknown_user", format!("unknown user {u:?}")),
        RecError::UnknownLocation(l) => {
            ApiError::new(StatusCode::NOT_FOUND, "unknown_location", format!("unknown location {l:?}"))
        }
        RecError::BadLambda(l) => ApiError::bad("bad_lambda", format!("lambda {l} is outside [0, 1]")),
        RecError::NonPositiveWeight(w) => ApiError::bad("bad_weight", format!("weight must be positive, got {w}")),
        RecError::EmptyStore => ApiError::store_empty(),
        RecError::Io(m) => ApiError::internal(m),
    }
}

async fn recommendations(State(s): State<Arc<AppState>>, q: RawQuery) -> Response {
    let snap = s.snapshot();
    let version = snap.version();
    let run = async {
        let p = Params::from(q)?;
        let user = p.required("user")?.to_string();
        let d = s.recommend;
        let params = RecommendParams {
            n: p.number("n")?.unwrap_or(d.n),
            lambda: p.number("lambda")?.unwrap_or(d.lambda),
            neighbors: p.number("k")?.unwrap_or(d.k),
        };
        let date = p.date("date")?.unwrap_or_else(|| Utc::now().date_naive());
        let matrix = s.matrix();
        let recs = blocking(move || {
            matrix
                .recommend(&user, params, Some(&snap), date)
                .map(|recommendations| RecommendationList {
                    user,
                    date,
                    lambda: params.lambda,
                    recommendations,
                })
        })
        .await?
        .map_err(rec_error)?;
        json(&recs)
    };
    with_version(version, run.await)
}

#[derive(Debug, Deserialize)]
struct InteractionBody {
    user: String,
    location: String,
    #[serde(default = "one")]
    weight: f64,
}

fn one() -> f64 {
    1.0
}

async fn interactions(State(s): State<Arc<AppState>>, body: Bytes) -> Response {
    let version = s.snapshot().version();
    let run = async {
        let b: InteractionBody =
            serde_json::from_slice(&body).map_err(|e| ApiError::bad("bad_request", e.to_string()))?;
        if b.user.trim().is_empty() {
            return Err(ApiError::bad("bad_request", "user must not be empty"));
        }
        let state = s.clone();
        blocking(move || state.record_interaction(&b.user, &b.location, b.weight))
            .await?
            .map_err(rec_error)?;
        Ok(StatusCode::NO_CONTENT.into_response())
    };
    with_version(version, run.await)
}

fn grid_error(e: GridError) -> ApiError {
    match e {
        GridError::Forecast(f) => forecast_error(f),
        GridError::UnknownPalette(p) => ApiError::bad("bad_palette", format!("unknown palette {p:?}")),
        GridError::Render(RenderError::DegenerateRange { lo, hi }) => {
            ApiError::bad("bad_range", format!("colour range lo {lo} must be below hi {hi}"))
        }
        GridError::Render(r) => ApiError::internal(r.to_string()),
        e @ GridError::NoData { .. } => ApiError::new(StatusCode::NOT_FOUND, "no_data", e.to_string()),
    }
}

async fn grid(State(s): State<Arc<AppState>>, q: RawQuery) -> Response {
    let snap = s.snapshot();
    let version = snap.version();
    let run = async {
        let p = Params::from(q)?;
        let mut req = GridRequest::new(p.required("var")?, p.required_date("date")?);
        req.lo = p.number("lo")?;
        req.hi = p.number("hi")?;
        req.palette = p.get("palette").map(str::to_string);
        req.scale = p.number("scale")?.unwrap_or(1);
        if !(1..=MAX_SCALE).contains(&req.scale) {
            return Err(ApiError::bad("bad_request", format!("scale must be in 1..={MAX_SCALE}")));
        }
        let ppm = match p.get("format").unwrap_or("json") {
            "json" => false,
            "ppm" => true,
            other => return Err(ApiError::bad("bad_format", format!("format {other:?} is not json or ppm"))),
        };
        let out = blocking(move || {
            let out = forecast_field(&snap, &req)?;
            if ppm {
                Ok(Err(encode_ppm(&out.raster(req.scale)?)))
            } else {
                Ok(Ok(out.json(req.date)))
            }
        })
        .await?
        .map_err(grid_error)?;
        match out {
            Ok(body) => json(&body),
            Err(bytes) => Ok(([(header::CONTENT_TYPE, "image/x-portable-pixmap")], bytes).into_response()),
        }
    };
    with_version(version, run.await)
}

async fn clusters(State(s): State<Arc<AppState>>, q: RawQuery) -> Response {
    let snap = s.snapshot();
    let version = snap.version();
    let run = async {
        let p = Params::from(q)?;
        let k = p.number("k")?.unwrap_or(DEFAULT_CLUSTERS);
        let seed = p.number("seed")?.unwrap_or(s.cluster_seed);
        if snap.is_empty() {
            return Err(ApiError::store_empty());
        }
        let state = s.clone();
        let model = blocking(move || state.clusters(&snap, k, seed)).await?.map_err(|e| match e {
            ClusterError::NoQualifyingCells => ApiError::new(StatusCode::NOT_FOUND, "no_data", e.to_string()),
            ClusterError::KTooLarge { .. } => ApiError::bad("bad_k", e.to_string()),
            other => ApiError::internal(other.to_string()),
        })?;
        json(&*model)
    };
    with_version(version, run.await)
}

async fn not_found(State(state): State<Arc<AppState>>) -> Response {
    let version = state.snapshot().version();
    with_version(version, Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")))
}

pub fn router(state: Arc<AppState>, ui_dir: Option<PathBuf>) -> Router {
    let mut r = Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/forecast", get(forecast))
        .route("/v1/route", get(route))
        .route("/v1/recommendations", get(recommendations))
        .route("/v1/interactions", post(interactions))
        .route("/v1/grid", get(grid))
        .route("/v1/clusters", get(clusters));
    if let Some(dir) = ui_dir {
        r = r.nest_service("/ui", ServeDir::new(dir));
    }
    r.fallback(not_found).with_state(state)
}
