use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use skycast_core::router::WeatherWeights;
use thiserror::Error;

pub const ENV_LISTEN: &str = "SKYCAST_LISTEN";
pub const ENV_DATA_DIR: &str = "SKYCAST_DATA_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("config is not valid JSON: {0}")]
    Parse(String),
    #[error("listen address {0:?} is not host:port")]
    BadListen(String),
    #[error("{what} {path} does not exist")]
    MissingPath { what: &'static str, path: PathBuf },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecommendDefaults {
    /// Neighbourhood size.
    pub k: usize,
    pub lambda: f64,
    pub n: usize,
}

impl Default for RecommendDefaults {
    fn default() -> Self {
        let d = skycast_core::recsys::RecommendParams::default();
        Self {
            k: d.neighbors,
            lambda: d.lambda,
            n: d.n,
        }
    }
}

/// Bounding box for provider point observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl Region {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.lat_min..=self.lat_max).contains(&lat) && (self.lon_min..=self.lon_max).contains(&lon)
    }
}

fn default_interval() -> u64 {
    60
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ProviderMode {
    #[default]
    Off,
    Replay {
        fixtures: PathBuf,
        #[serde(default = "default_interval")]
        interval_secs: u64,
        #[serde(default)]
        region: Option<Region>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApiConfig {
    pub listen: String,
    /// Snapshot root; one subdirectory per version.
    pub data_dir: PathBuf,
    pub graph: Option<PathBuf>,
    /// Interaction JSON-lines file, appended on every POST.
    pub matrix: Option<PathBuf>,
    /// `[{id, lat, lon}]`.
    pub locations: Option<PathBuf>,
    pub weights: WeatherWeights,
    pub recommend: RecommendDefaults,
    pub cluster_seed: u64,
    pub provider: ProviderMode,
    /// Static web client served under /ui.
    pub ui_dir: Option<PathBuf>,
}

impl Default for ApiConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("data"),
            graph: None,
            matrix: None,
            locations: None,
            weights: WeatherWeights::default(),
            recommend: RecommendDefaults::default(),
            cluster_seed: 42,
            provider: ProviderMode::Off,
            ui_dir: None,
        }
    }
}

impl ApiConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::from_json(&text)?;
        // relative paths are taken from the config file's directory
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        for p in [&mut self.graph, &mut self.matrix, &mut self.locations, &mut self.ui_dir].into_iter().flatten() {
            fix(p);
        }
        if let ProviderMode::Replay { fixtures, .. } = &mut self.provider {
            fix(fixtures);
        }
    }

    /// Applies `SKYCAST_LISTEN` and `SKYCAST_DATA_DIR` from `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        if let Some(v) = lookup(ENV_LISTEN) {
            self.listen = v;
        }
        if let Some(v) = lookup(ENV_DATA_DIR) {
            self.data_dir = PathBuf::from(v);
        }
    }

    pub fn listen_addr(&self) -> Result<SocketAddr, ConfigError> {
        self.listen.parse().map_err(|_| ConfigError::BadListen(self.listen.clone()))
    }

    /// Checks the listen address, that every configured path exists, and
    /// the numeric settings.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.listen_addr()?;
        let must_exist = |what, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(ConfigError::MissingPath { what, path: p.to_path_buf() })
            }
        };
        must_exist("data directory", &self.data_dir)?;
        for (what, p) in [
            ("road graph", &self.graph),
            ("interaction matrix", &self.matrix),
            ("location registry", &self.locations),
            ("ui directory", &self.ui_dir),
        ] {
            if let Some(p) = p {
                must_exist(what, p)?;
            }
        }
        if let ProviderMode::Replay { fixtures, interval_secs, .. } = &self.provider {
            must_exist("fixture directory", fixtures)?;
            if *interval_secs == 0 {
                return Err(ConfigError::Invalid("provider interval must be at least 1 s".into()));
            }
        }
        if self.matrix.is_some() && self.locations.is_none() {
            return Err(ConfigError::Invalid("an interaction matrix needs a location registry".into()));
        }
        self.weights.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let r = &self.recommend;
        if !(0.0..=1.0).contains(&r.lambda) {
            return Err(ConfigError::Invalid(format!("recommend.lambda {} is outside [0, 1]", r.lambda)));
        }
        if r.n == 0 {
            return Err(ConfigError::Invalid("recommend.n must be positive".into()));
        }
        Ok(())
    }
}
