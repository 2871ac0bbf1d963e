//! Immutable, versioned per-cell time-series store.
//!
//! A [`StoreSnapshot`] never changes once built. Ingesting returns a new
//! snapshot with the next version number; [`SharedStore`] publishes snapshots
//! with an atomic pointer swap so readers always see one complete version.

mod persist;

pub use persist::{load_latest, load_snapshot, save_snapshot, snapshot_dirs, COLUMN_MAGIC};

use std::collections::BTreeMap;
use std::ops::RangeBounds;
use std::sync::Arc;

use arc_swap::ArcSwap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geo::{haversine_km, GeoPoint};
use crate::ncgrid::{GridDataset, NcError};
use crate::time::EpochDay;
use crate::units::{normalize, VariableKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoreError {
    #[error("dataset axes do not match the store grid: {0}")]
    AxisMismatch(String),
    #[error("input has no cells, times or variables")]
    EmptyInput,
    #[error("store is empty")]
    EmptyStore,
    #[error("cell ({lat_idx}, {lon_idx}) is outside the grid")]
    CellOutOfRange { lat_idx: usize, lon_idx: usize },
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error(transparent)]
    Dataset(#[from] NcError),
    #[error("snapshot I/O: {0}")]
    Io(String),
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub lat_idx: usize,
    pub lon_idx: usize,
}

impl CellKey {
    pub fn new(lat_idx: usize, lon_idx: usize) -> Self {
        Self { lat_idx, lon_idx }
    }
}

/// Observations of one variable at one cell, ordered by day.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSeries {
    pub variable: String,
    pub kind: VariableKind,
    pub cell: CellKey,
    pub times: Vec<EpochDay>,
    pub values: Vec<f64>,
}

impl CellSeries {
    pub fn new(kind: VariableKind, times: Vec<EpochDay>, values: Vec<f64>) -> Self {
        assert_eq!(times.len(), values.len());
        debug_assert!(times.windows(2).all(|w| w[0] < w[1]));
        Self {
            variable: kind.canonical_name().unwrap_or("other").to_string(),
            kind,
            cell: CellKey::new(0, 0),
            times,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(EpochDay, f64)> {
        Some((*self.times.last()?, *self.values.last()?))
    }
}

/// Ingest record kept with each snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub version: u64,
    pub observations: usize,
    /// Observations that replaced an existing (cell, variable, day) value.
    pub replaced: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct VariableData {
    pub(crate) kind: VariableKind,
    /// Row-major by (lat, lon); each series sorted by day.
    pub(crate) cells: Vec<Vec<(EpochDay, f64)>>,
}

/// Where a provider observation lands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObsLocation {
    Cell(CellKey),
    Point(GeoPoint),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub location: ObsLocation,
    pub variable: String,
    pub day: EpochDay,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreSnapshot {
    version: u64,
    lats: Arc<[f64]>,
    lons: Arc<[f64]>,
    variables: BTreeMap<String, Arc<VariableData>>,
    provenance: Vec<Provenance>,
}

impl Default for StoreSnapshot {
    fn default() -> Self {
        Self::empty()
    }
}

/// Name a variable is stored under: the kind's canonical name when known.
pub fn store_name(raw: &str, kind: VariableKind) -> String {
    kind.canonical_name()
        .map(str::to_string)
        .unwrap_or_else(|| raw.to_string())
}

impl StoreSnapshot {
    pub fn empty() -> Self {
        Self {
            version: 0,
            lats: Arc::from(Vec::new()),
            lons: Arc::from(Vec::new()),
            variables: BTreeMap::new(),
            provenance: Vec::new(),
        }
    }

    pub(crate) fn from_parts(
        version: u64,
        lats: Vec<f64>,
        lons: Vec<f64>,
        variables: BTreeMap<String, Arc<VariableData>>,
        provenance: Vec<Provenance>,
    ) -> Self {
        Self {
            version,
            lats: Arc::from(lats),
            lons: Arc::from(lons),
            variables,
            provenance,
        }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn lats(&self) -> &[f64] {
        &self.lats
    }

    pub fn lons(&self) -> &[f64] {
        &self.lons
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn cell_count(&self) -> usize {
        self.lats.len() * self.lons.len()
    }

    /// True when the grid has no cells.
    pub fn is_empty(&self) -> bool {
        self.cell_count() == 0
    }

    pub fn variables(&self) -> impl Iterator<Item = (&str, VariableKind)> {
        self.variables.iter().map(|(n, v)| (n.as_str(), v.kind))
    }

    pub(crate) fn variable_data(&self) -> &BTreeMap<String, Arc<VariableData>> {
        &self.variables
    }

    /// Resolves a user-facing name (`temperature`, `temp`, `tas`, ...) to the
    /// stored variable name.
    pub fn resolve_variable(&self, name: &str) -> Result<&str, StoreError> {
        if let Some((k, _)) = self.variables.get_key_value(name) {
            return Ok(k);
        }
        let kind = VariableKind::classify(name, None);
        kind.canonical_name()
            .and_then(|c| self.variables.get_key_value(c))
            .map(|(k, _)| k.as_str())
            .ok_or_else(|| StoreError::UnknownVariable(name.to_string()))
    }

    pub fn variable_kind(&self, name: &str) -> Result<VariableKind, StoreError> {
        let n = self.resolve_variable(name)?;
        Ok(self.variables[n].kind)
    }

    pub fn cells(&self) -> impl Iterator<Item = CellKey> + '_ {
        let nlon = self.lons.len();
        (0..self.cell_count()).map(move |i| CellKey::new(i / nlon, i % nlon))
    }

    pub fn cell_index(&self, cell: CellKey) -> Result<usize, StoreError> {
        if cell.lat_idx >= self.lats.len() || cell.lon_idx >= self.lons.len() {
            return Err(StoreError::CellOutOfRange {
                lat_idx: cell.lat_idx,
                lon_idx: cell.lon_idx,
            });
        }
        Ok(cell.lat_idx * self.lons.len() + cell.lon_idx)
    }

    pub fn cell_center(&self, cell: CellKey) -> Result<GeoPoint, StoreError> {
        self.cell_index(cell)?;
        GeoPoint::new(self.lats[cell.lat_idx], self.lons[cell.lon_idx])
            .map_err(|e| StoreError::Corrupt(e.to_string()))
    }

    /// Cell whose centre is closest by haversine distance; ties go to the
    /// lower lat index, then the lower lon index.
    pub fn nearest_cell(&self, point: GeoPoint) -> Result<CellKey, StoreError> {
        if self.is_empty() {
            return Err(StoreError::EmptyStore);
        }
        let mut best = (f64::INFINITY, CellKey::new(0, 0));
        for (i, &lat) in self.lats.iter().enumerate() {
            for (j, &lon) in self.lons.iter().enumerate() {
                let d = haversine_km(point.lat(), point.lon(), lat, lon);
                if d < best.0 {
                    best = (d, CellKey::new(i, j));
                }
            }
        }
        Ok(best.1)
    }

    /// Observations of `variable` at `cell` whose day lies in `range`.
    pub fn series(
        &self,
        cell: CellKey,
        variable: &str,
        range: impl RangeBounds<EpochDay>,
    ) -> Result<CellSeries, StoreError> {
        let name = self.resolve_variable(variable)?;
        let idx = self.cell_index(cell)?;
        let data = &self.variables[name];
        let (times, values) = data.cells[idx]
            .iter()
            .filter(|(d, _)| range.contains(d))
            .copied()
            .unzip();
        Ok(CellSeries {
            variable: name.to_string(),
            kind: data.kind,
            cell,
            times,
            values,
        })
    }

    /// Latest observation day for a variable over the whole grid.
    pub fn last_day(&self, variable: &str) -> Option<EpochDay> {
        let name = self.resolve_variable(variable).ok()?;
        self.variables[name]
            .cells
            .iter()
            .filter_map(|c| c.last().map(|o| o.0))
            .max()
    }

    fn check_axes(&self, lats: &[f64], lons: &[f64]) -> Result<(), StoreError> {
        if self.is_empty() && self.variables.is_empty() {
            return Ok(());
        }
        if *self.lats != *lats {
            return Err(StoreError::AxisMismatch(format!(
                "latitude axis differs ({} vs {} points)",
                self.lats.len(),
                lats.len()
            )));
        }
        if *self.lons != *lons {
            return Err(StoreError::AxisMismatch(format!(
                "longitude axis differs ({} vs {} points)",
                self.lons.len(),
                lons.len()
            )));
        }
        Ok(())
    }

    /// Merges observations into a new snapshot. Later values win for a
    /// duplicate (cell, variable, day).
    fn merged(
        &self,
        lats: &[f64],
        lons: &[f64],
        batches: BTreeMap<String, (VariableKind, Vec<(usize, EpochDay, f64)>)>,
        source: &str,
    ) -> StoreSnapshot {
        let ncell = lats.len() * lons.len();
        let mut variables = self.variables.clone();
        let mut observations = 0;
        let mut replaced = 0;
        for (name, (kind, obs)) in batches {
            let mut data = variables
                .get(&name)
                .map(|d| (**d).clone())
                .unwrap_or_else(|| VariableData {
                    kind,
                    cells: vec![Vec::new(); ncell],
                });
            let mut per_cell: BTreeMap<usize, BTreeMap<EpochDay, f64>> = BTreeMap::new();
            for (cell, day, value) in obs {
                per_cell.entry(cell).or_default().insert(day, value);
            }
            for (cell, updates) in per_cell {
                let mut merged: BTreeMap<EpochDay, f64> = data.cells[cell].iter().copied().collect();
                for (day, value) in updates {
                    observations += 1;
                    if merged.insert(day, value).is_some() {
                        replaced += 1;
                    }
                }
                data.cells[cell] = merged.into_iter().collect();
            }
            variables.insert(name, Arc::new(data));
        }
        let version = self.version + 1;
        let mut provenance = self.provenance.clone();
        provenance.push(Provenance {
            source: source.to_string(),
            version,
            observations,
            replaced,
        });
        StoreSnapshot {
            version,
            lats: Arc::from(lats.to_vec()),
            lons: Arc::from(lons.to_vec()),
            variables,
            provenance,
        }
    }

    /// Adds a parsed dataset, converting units to the store's conventions
    /// (°C, hPa, mm). Times are truncated to whole days.
    pub fn ingest(&self, ds: &GridDataset, source: &str) -> Result<StoreSnapshot, StoreError> {
        let [nt, nlat, nlon] = ds.shape();
        if nt == 0 || nlat == 0 || nlon == 0 || ds.fields.is_empty() {
            return Err(StoreError::EmptyInput);
        }
        ds.validate()?;
        self.check_axes(&ds.lats, &ds.lons)?;
        let ncell = nlat * nlon;
        let mut batches = BTreeMap::new();
        for (raw, field) in &ds.fields {
            let name = store_name(raw, field.kind);
            let (_, obs) = batches
                .entry(name)
                .or_insert_with(|| (field.kind, Vec::new()));
            for (t, &time) in ds.times.iter().enumerate() {
                let day = time.floor() as EpochDay;
                for cell in 0..ncell {
                    let i = t * ncell + cell;
                    if !field.mask[i] {
                        let v = normalize(field.kind, field.units.as_deref(), field.values[i]);
                        obs.push((cell, day, v));
                    }
                }
            }
        }
        Ok(self.merged(&ds.lats, &ds.lons, batches, source))
    }

    pub fn ingest_csv(&self, text: &str, source: &str) -> Result<StoreSnapshot, StoreError> {
        let ds = GridDataset::from_csv(text)?;
        self.ingest(&ds, source)
    }

    /// Adds point observations onto the existing grid. Points resolve to their
    /// nearest cell.
    pub fn ingest_observations(
        &self,
        obs: &[Observation],
        source: &str,
    ) -> Result<StoreSnapshot, StoreError> {
        if self.is_empty() {
            return Err(StoreError::EmptyStore);
        }
        if obs.is_empty() {
            return Err(StoreError::EmptyInput);
        }
        let mut batches: BTreeMap<String, (VariableKind, Vec<_>)> = BTreeMap::new();
        for o in obs {
            let cell = match o.location {
                ObsLocation::Cell(c) => c,
                ObsLocation::Point(p) => self.nearest_cell(p)?,
            };
            let idx = self.cell_index(cell)?;
            let (name, kind) = match self.resolve_variable(&o.variable) {
                Ok(n) => (n.to_string(), self.variables[n].kind),
                Err(_) => {
                    let kind = VariableKind::classify(&o.variable, None);
                    (store_name(&o.variable, kind), kind)
                }
            };
            batches
                .entry(name)
                .or_insert_with(|| (kind, Vec::new()))
                .1
                .push((idx, o.day, o.value));
        }
        let (lats, lons) = (self.lats.clone(), self.lons.clone());
        Ok(self.merged(&lats, &lons, batches, source))
    }

    /// SHA-256 over axes and every stored observation (not the version).
    pub fn content_digest(&self) -> String {
        let mut h = Sha256::new();
        for v in self.lats.iter().chain(self.lons.iter()) {
            h.update(v.to_le_bytes());
        }
        for (name, data) in &self.variables {
            h.update(name.as_bytes());
            h.update([0]);
            for cell in &data.cells {
                h.update((cell.len() as u64).to_le_bytes());
                for (d, v) in cell {
                    h.update(d.to_le_bytes());
                    h.update(v.to_le_bytes());
                }
            }
        }
        format!("{:x}", h.finalize())
    }
}

/// Latest published snapshot, swapped atomically on each ingest.
#[derive(Debug)]
pub struct SharedStore {
    current: ArcSwap<StoreSnapshot>,
}

impl SharedStore {
    pub fn new(initial: StoreSnapshot) -> Self {
        Self {
            current: ArcSwap::from_pointee(initial),
        }
    }

    pub fn load(&self) -> Arc<StoreSnapshot> {
        self.current.load_full()
    }

    pub fn publish(&self, snapshot: StoreSnapshot) -> Arc<StoreSnapshot> {
        let s = Arc::new(snapshot);
        self.current.store(s.clone());
        s
    }
}
