//! K-means clustering of grid cells by climate features.
//!
//! Each qualifying cell becomes one row of four features:
//!
//! | column | definition |
//! |---|---|
//! | `temp_mean` | mean of the cell's climatological monthly mean temperatures |
//! | `temp_amplitude` | warmest minus coldest climatological monthly mean |
//! | `rain_mean` | mean monthly rainfall total |
//! | `rain_variance` | population variance of monthly rainfall totals |
//!
//! Columns are standardized; constant columns are dropped. Fitting uses
//! k-means++ seeding from a ChaCha8 stream followed by Lloyd iterations.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::monthly_aggregates;
use crate::store::{CellKey, CellSeries, StoreSnapshot};

pub const DEFAULT_K: usize = 5;
pub const MAX_ITERATIONS: usize = 100;
/// Stop once no centroid moves further than this (standardized units).
pub const SHIFT_TOLERANCE: f64 = 1e-6;

pub const FEATURE_NAMES: [&str; 4] = ["temp_mean", "temp_amplitude", "rain_mean", "rain_variance"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("no cell has both temperature and rainfall data")]
    NoQualifyingCells,
    #[error("k = {k} is outside 1..={rows}")]
    KTooLarge { k: usize, rows: usize },
    #[error("feature matrix has no rows")]
    DegenerateFeatures,
    #[error("vector has {got} dimensions, model has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Standardized per-cell features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    /// Grid cell of each row.
    pub cells: Vec<CellKey>,
    /// Row-major cell index (lat_idx * nlon + lon_idx) of each row.
    pub cell_indices: Vec<usize>,
    /// Cells lacking temperature or rainfall data.
    pub excluded: Vec<CellKey>,
    /// Names of the retained columns.
    pub feature_names: Vec<String>,
    /// Columns removed because their spread was zero.
    pub dropped: Vec<String>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Features before standardization, all columns.
    pub raw: Vec<Vec<f64>>,
    /// Standardized retained columns.
    pub rows: Vec<Vec<f64>>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pop_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// Raw (unstandardized) feature vector for one cell.
pub fn cell_features(temperature: &CellSeries, rainfall: &CellSeries) -> [f64; 4] {
    let mut by_month: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for ((_, m), v) in monthly_aggregates(temperature) {
        by_month.entry(m).or_default().push(v);
    }
    let clim: Vec<f64> = by_month.values().map(|v| mean(v)).collect();
    let temp_mean = mean(&clim);
    let amplitude = clim.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - clim.iter().cloned().fold(f64::INFINITY, f64::min);
    let totals: Vec<f64> = monthly_aggregates(rainfall).into_values().collect();
    [temp_mean, amplitude, mean(&totals), pop_variance(&totals)]
}

impl FeatureMatrix {
    /// Standardizes raw rows, dropping columns whose spread is numerically zero.
    pub fn from_rows(names: &[&str], cells: Vec<CellKey>, cell_indices: Vec<usize>, raw: Vec<Vec<f64>>) -> Self {
        let ncol = names.len();
        let n = raw.len();
        let mut keep = Vec::new();
        let mut dropped = Vec::new();
        let mut mu = Vec::new();
        let mut sigma = Vec::new();
        for c in 0..ncol {
            let col: Vec<f64> = raw.iter().map(|r| r[c]).collect();
            let (m, s) = if n == 0 { (0.0, 0.0) } else { (mean(&col), pop_variance(&col).sqrt()) };
            if s.is_finite() && s > 1e-12 * m.abs().max(1.0) {
                keep.push(c);
                mu.push(m);
                sigma.push(s);
            } else {
                dropped.push(names[c].to_string());
            }
        }
        let rows = raw
            .iter()
            .map(|r| {
                keep.iter()
                    .zip(mu.iter().zip(&sigma))
                    .map(|(&c, (m, s))| (r[c] - m) / s)
                    .collect()
            })
            .collect();
        Self {
            cells,
            cell_indices,
            excluded: Vec::new(),
            feature_names: keep.iter().map(|&c| names[c].to_string()).collect(),
            dropped,
            mu,
            sigma,
            raw,
            rows,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.feature_names.len()
    }
}

/// One feature row per cell holding both temperature and rainfall data.
pub fn build_features(snapshot: &StoreSnapshot) -> Result<FeatureMatrix, ClusterError> {
    let (Ok(_), Ok(_)) = (
        snapshot.resolve_variable("temperature"),
        snapshot.resolve_variable("rainfall"),
    ) else {
        return Err(ClusterError::NoQualifyingCells);
    };
    let nlon = snapshot.lons().len();
    let mut cells = Vec::new();
    let mut excluded = Vec::new();
    let mut raw = Vec::new();
    for cell in snapshot.cells() {
        let t = snapshot.series(cell, "temperature", ..).ok().filter(|s| !s.is_empty());
        let r = snapshot.series(cell, "rainfall", ..).ok().filter(|s| !s.is_empty());
        match (t, r) {
            (Some(t), Some(r)) => {
                cells.push(cell);
                raw.push(cell_features(&t, &r).to_vec());
            }
            _ => excluded.push(cell),
        }
    }
    if cells.is_empty() {
        return Err(ClusterError::NoQualifyingCells);
    }
    let idx = cells.iter().map(|c| c.lat_idx * nlon + c.lon_idx).collect();
    let mut fm = FeatureMatrix::from_rows(&FEATURE_NAMES, cells, idx, raw);
    fm.excluded = excluded;
    Ok(fm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub seed: u64,
    pub centroids: Vec<Vec<f64>>,
    /// Cluster id of each feature row.
    pub assignments: Vec<usize>,
    pub cells: Vec<CellKey>,
    pub cell_indices: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after the initial assignment and after every Lloyd step.
    pub inertia_history: Vec<f64>,
    pub feature_names: Vec<String>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// JSON export of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelExport {
    pub k: usize,
    pub feature_names: Vec<String>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub centroids: Vec<Vec<f64>>,
    /// Row-major cell index → cluster id.
    pub assignments: BTreeMap<usize, usize>,
    pub inertia: f64,
    pub seed: u64,
}

impl ClusterModel {
    pub fn export(&self) -> ModelExport {
        ModelExport {
            k: self.k,
            feature_names: self.feature_names.clone(),
            mu: self.mu.clone(),
            sigma: self.sigma.clone(),
            centroids: self.centroids.clone(),
            assignments: self.cell_indices.iter().copied().zip(self.assignments.iter().copied()).collect(),
            inertia: self.inertia,
            seed: self.seed,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid and the squared distance; ties go to the
/// lower index.
fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn assign_all(centroids: &[Vec<f64>], rows: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let pairs: Vec<(usize, f64)> = rows.par_iter().map(|r| nearest(centroids, r)).collect();
    let inertia = pairs.iter().map(|p| p.1).sum();
    (pairs.into_iter().map(|p| p.0).collect(), inertia)
}

fn kmeans_pp(rows: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &rows[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // every row coincides with a chosen centre
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, r) in rows.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, &rows[next]));
        }
    }
    chosen.into_iter().map(|i| rows[i].clone()).collect()
}

/// Lloyd's algorithm from k-means++ seeds. Deterministic in
/// (features, k, seed), and equivariant under row permutation because rows
/// are visited in a canonical value order.
pub fn kmeans_fit(features: &FeatureMatrix, k: usize, seed: u64) -> Result<ClusterModel, ClusterError> {
    let n = features.len();
    if n == 0 {
        return Err(ClusterError::DegenerateFeatures);
    }
    if k == 0 || k > n {
        return Err(ClusterError::KTooLarge { k, rows: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&features.rows[a], &features.rows[b]);
        ra.iter()
            .zip(rb)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let rows: Vec<Vec<f64>> = order.iter().map(|&i| features.rows[i].clone()).collect();
    let dims = features.dims();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp(&rows, k, &mut rng);
    let (mut labels, mut inertia) = assign_all(&centroids, &rows);
    let mut history = vec![inertia];
    let mut iterations = 0;
    for it in 1..=MAX_ITERATIONS {
        let mut sums = vec![vec![0.0; dims]; k];
        let mut counts = vec![0usize; k];
        for (r, &l) in rows.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(r) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            // an emptied cluster keeps its centre
            if counts[c] == 0 {
                continue;
            }
            let updated: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&updated, &centroids[c]).sqrt());
            centroids[c] = updated;
        }
        (labels, inertia) = assign_all(&centroids, &rows);
        history.push(inertia);
        iterations = it;
        if shift < SHIFT_TOLERANCE {
            break;
        }
    }

    let mut assignments = vec![0; n];
    for (pos, &orig) in order.iter().enumerate() {
        assignments[orig] = labels[pos];
    }
    Ok(ClusterModel {
        k,
        seed,
        centroids,
        assignments,
        cells: features.cells.clone(),
        cell_indices: features.cell_indices.clone(),
        inertia,
        iterations,
        inertia_history: history,
        feature_names: features.feature_names.clone(),
        mu: features.mu.clone(),
        sigma: features.sigma.clone(),
    })
}

/// Nearest centroid by Euclidean distance, ties to the lower id.
pub fn assign(model: &ClusterModel, vector: &[f64]) -> Result<usize, ClusterError> {
    let expected = model.centroids.first().map_or(0, Vec::len);
    if vector.len() != expected {
        return Err(ClusterError::DimensionMismatch {
            expected,
            got: vector.len(),
        });
    }
    Ok(nearest(&model.centroids, vector).0)
}

/// Chance-corrected agreement between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let choose2 = |x: f64| x * (x - 1.0) / 2.0;
    let mut table: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut ra: BTreeMap<usize, f64> = BTreeMap::new();
    let mut rb: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *ra.entry(x).or_default() += 1.0;
        *rb.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&v| choose2(v)).sum();
    let sa: f64 = ra.values().map(|&v| choose2(v)).sum();
    let sb: f64 = rb.values().map(|&v| choose2(v)).sum();
    let expected = sa * sb / choose2(n);
    let max = (sa + sb) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
