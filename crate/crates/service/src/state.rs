use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{BufReader, Read, Seek, SeekFrom, Write};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use chrono::Utc;
use skycast_core::cluster::{build_features, kmeans_fit, ClusterError, ModelExport};
use skycast_core::recsys::{InteractionMatrix, InteractionRecord, LocationRecord, RecError};
use skycast_core::router::{parse_geojson, RoadGraph, WeatherWeights};
use skycast_core::store::{load_latest, save_snapshot, SharedStore, StoreError};
use skycast_core::StoreSnapshot;
use thiserror::Error;

use crate::config::{ApiConfig, ConfigError, RecommendDefaults};
use crate::provider::{poll_provider, PollReport, Provider};

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("loading snapshots: {0}")]
    Store(#[from] StoreError),
    #[error("loading road graph: {0}")]
    Graph(String),
    #[error("loading interactions: {0}")]
    Matrix(#[from] RecError),
    #[error("{0}")]
    Io(String),
}

/// Appends `line`, first terminating a final line that lacks its newline.
fn append_line(path: &std::path::Path, line: &[u8]) -> std::io::Result<()> {
    let mut f = OpenOptions::new().create(true).read(true).append(true).open(path)?;
    if f.metadata()?.len() > 0 {
        let mut last = [0u8];
        f.seek(SeekFrom::End(-1))?;
        f.read_exact(&mut last)?;
        if last[0] != b'\n' {
            f.write_all(b"\n")?;
        }
    }
    f.write_all(line)
}

/// Everything a request handler reads. Snapshots and the matrix are
/// swapped whole, so a reader never sees a partial update.
pub struct AppState {
    pub store: SharedStore,
    matrix: ArcSwap<InteractionMatrix>,
    /// Serializes matrix writes; holds the JSON-lines file they append to.
    matrix_writer: Mutex<Option<PathBuf>>,
    /// Serializes snapshot publication.
    ingest: Mutex<Option<PathBuf>>,
    pub graph: Option<Arc<RoadGraph>>,
    pub weights: WeatherWeights,
    pub recommend: RecommendDefaults,
    pub cluster_seed: u64,
    clusters: Mutex<HashMap<(u64, usize, u64), Arc<ModelExport>>>,
}

impl AppState {
    pub fn new(snapshot: StoreSnapshot, matrix: InteractionMatrix, graph: Option<RoadGraph>) -> Self {
        let c = ApiConfig::default();
        Self {
            store: SharedStore::new(snapshot),
            matrix: ArcSwap::from_pointee(matrix),
            matrix_writer: Mutex::new(None),
            ingest: Mutex::new(None),
            graph: graph.map(Arc::new),
            weights: c.weights,
            recommend: c.recommend,
            cluster_seed: c.cluster_seed,
            clusters: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_weights(mut self, weights: WeatherWeights) -> Self {
        self.weights = weights;
        self
    }

    /// Appends every accepted interaction to `path`.
    pub fn with_matrix_file(self, path: PathBuf) -> Self {
        *self.matrix_writer.lock().unwrap() = Some(path);
        self
    }

    /// Saves every snapshot published by a provider poll under `root`.
    pub fn with_snapshot_dir(self, root: PathBuf) -> Self {
        *self.ingest.lock().unwrap() = Some(root);
        self
    }

    pub fn from_config(config: &ApiConfig) -> Result<Self, StartupError> {
        config.validate()?;
        let snapshot = load_latest(&config.data_dir)?;
        let graph = match &config.graph {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| StartupError::Graph(e.to_string()))?;
                Some(parse_geojson(&text).map_err(|e| StartupError::Graph(e.to_string()))?)
            }
            None => None,
        };
        let mut matrix = match &config.locations {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| StartupError::Io(format!("{}: {e}", p.display())))?;
                let records: Vec<LocationRecord> = serde_json::from_str(&text)
                    .map_err(|e| StartupError::Io(format!("{}: {e}", p.display())))?;
                InteractionMatrix::from_locations(&records)?
            }
            None => InteractionMatrix::new(),
        };
        if let Some(p) = &config.matrix {
            let f = std::fs::File::open(p).map_err(|e| StartupError::Io(format!("{}: {e}", p.display())))?;
            matrix.read_jsonl(BufReader::new(f))?;
        }
        let mut state = Self::new(snapshot, matrix, graph)
            .with_weights(config.weights)
            .with_snapshot_dir(config.data_dir.clone());
        if let Some(p) = &config.matrix {
            state = state.with_matrix_file(p.clone());
        }
        state.recommend = config.recommend;
        state.cluster_seed = config.cluster_seed;
        Ok(state)
    }

    pub fn snapshot(&self) -> Arc<StoreSnapshot> {
        self.store.load()
    }

    pub fn matrix(&self) -> Arc<InteractionMatrix> {
        self.matrix.load_full()
    }

    /// Adds an interaction through the single writer: copy, update, append to
    /// the matrix file, then publish.
    pub fn record_interaction(&self, user: &str, location: &str, weight: f64) -> Result<(), RecError> {
        let file = self.matrix_writer.lock().unwrap_or_else(|p| p.into_inner());
        let mut next = InteractionMatrix::clone(&self.matrix.load());
        let now = Utc::now();
        next.record_interaction_at(user, location, weight, now)?;
        if let Some(path) = file.as_ref() {
            let record = InteractionRecord {
                user: user.to_string(),
                location: location.to_string(),
                weight: next.weight(user, location),
                last_updated: now,
            };
            let mut line = serde_json::to_vec(&record).map_err(|e| RecError::Io(e.to_string()))?;
            line.push(b'\n');
            append_line(path, &line).map_err(|e| RecError::Io(format!("{}: {e}", path.display())))?;
        }
        self.matrix.store(Arc::new(next));
        Ok(())
    }

    /// One provider poll through the ingest lock.
    pub fn poll(
        &self,
        provider: &mut dyn Provider,
        region: Option<&crate::config::Region>,
        today: chrono::NaiveDate,
    ) -> PollReport {
        let dir = self.ingest.lock().unwrap_or_else(|p| p.into_inner());
        let report = poll_provider(provider, &self.store, region, today);
        if let (Some(root), Some(_)) = (dir.as_ref(), report.published) {
            if let Err(e) = save_snapshot(&self.store.load(), root) {
                tracing::error!("saving polled snapshot: {e}");
            }
        }
        report
    }

    /// Fits (or fetches from cache) a model for `(snapshot version, k, seed)`.
    pub fn clusters(&self, snapshot: &StoreSnapshot, k: usize, seed: u64) -> Result<Arc<ModelExport>, ClusterError> {
        let key = (snapshot.version(), k, seed);
        if let Some(m) = self.clusters.lock().unwrap().get(&key) {
            return Ok(m.clone());
        }
        let model = Arc::new(kmeans_fit(&build_features(snapshot)?, k, seed)?.export());
        let mut cache = self.clusters.lock().unwrap();
        // older versions can never be asked for again
        cache.retain(|(v, _, _), _| *v >= key.0);
        Ok(cache.entry(key).or_insert(model).clone())
    }
}
