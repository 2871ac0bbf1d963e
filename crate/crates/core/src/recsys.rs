//! User-to-location collaborative filtering.
//!
//! Rows of the N×M interaction matrix are users, columns are locations and
//! entries are implicit interaction weights (visits, queries). A user's
//! score for an unvisited location is the similarity-weighted mean of their
//! k most similar neighbours' weights for it, with cosine similarity between
//! user rows. Scores can be blended with a weather comfort score taken from
//! the forecast at each location.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::forecast::forecast_at;
use crate::geo::GeoPoint;
use crate::store::StoreSnapshot;

pub const DEFAULT_NEIGHBORS: usize = 10;
pub const DEFAULT_LAMBDA: f64 = 0.3;
pub const DEFAULT_COUNT: usize = 10;

/// Temperature with full comfort.
pub const COMFORT_TEMP_C: f64 = 21.0;
/// Deviation from [`COMFORT_TEMP_C`] at which comfort reaches zero.
pub const COMFORT_TEMP_SPAN_C: f64 = 20.0;
/// Rainfall at which comfort reaches zero.
pub const COMFORT_RAIN_MM: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecError {
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("unknown location {0:?}")]
    UnknownLocation(String),
    #[error("weight must be positive and finite, got {0}")]
    NonPositiveWeight(f64),
    #[error("lambda must lie in [0, 1], got {0}")]
    BadLambda(f64),
    #[error("store is empty; weather blending needs forecasts")]
    EmptyStore,
    #[error("matrix file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub weight: f64,
    pub last_updated: DateTime<Utc>,
}

/// One line of the JSON-lines matrix file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub user: String,
    pub location: String,
    pub weight: f64,
    pub last_updated: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationRecord {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InteractionMatrix {
    locations: BTreeMap<String, GeoPoint>,
    users: BTreeMap<String, BTreeMap<String, Interaction>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendation {
    pub location: String,
    pub cf_score: f64,
    pub comfort_score: f64,
    pub blended_score: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecommendParams {
    pub n: usize,
    pub lambda: f64,
    pub neighbors: usize,
}

impl Default for RecommendParams {
    fn default() -> Self {
        Self {
            n: DEFAULT_COUNT,
            lambda: DEFAULT_LAMBDA,
            neighbors: DEFAULT_NEIGHBORS,
        }
    }
}

/// Comfort in [0, 1]: 1 at 21 °C falling linearly to 0 at ±20 °C, scaled
/// down linearly by rainfall up to 10 mm. Missing temperature gives 0.
pub fn comfort_score(temp_c: Option<f64>, precip_mm: Option<f64>) -> f64 {
    let Some(t) = temp_c.filter(|t| t.is_finite()) else {
        return 0.0;
    };
    let base = 1.0 - ((t - COMFORT_TEMP_C).abs() / COMFORT_TEMP_SPAN_C).min(1.0);
    let rain = precip_mm
        .filter(|p| p.is_finite())
        .map_or(1.0, |p| (1.0 - p / COMFORT_RAIN_MM).max(0.0));
    (base * rain).clamp(0.0, 1.0)
}

impl InteractionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_location(&mut self, id: &str, point: GeoPoint) {
        self.locations.insert(id.to_string(), point);
    }

    /// Registers a user with no interactions (a cold-start row).
    pub fn add_user(&mut self, id: &str) {
        self.users.entry(id.to_string()).or_default();
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.users.keys().map(String::as_str)
    }

    pub fn locations(&self) -> impl Iterator<Item = (&str, GeoPoint)> {
        self.locations.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn has_user(&self, user: &str) -> bool {
        self.users.contains_key(user)
    }

    pub fn weight(&self, user: &str, location: &str) -> f64 {
        self.users
            .get(user)
            .and_then(|r| r.get(location))
            .map_or(0.0, |i| i.weight)
    }

    pub fn record_interaction(&mut self, user: &str, location: &str, weight: f64) -> Result<(), RecError> {
        self.record_interaction_at(user, location, weight, Utc::now())
    }

    /// Adds `weight` to the (user, location) entry, registering new users.
    pub fn record_interaction_at(
        &mut self,
        user: &str,
        location: &str,
        weight: f64,
        at: DateTime<Utc>,
    ) -> Result<(), RecError> {
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(RecError::NonPositiveWeight(weight));
        }
        if !self.locations.contains_key(location) {
            return Err(RecError::UnknownLocation(location.to_string()));
        }
        let e = self
            .users
            .entry(user.to_string())
            .or_default()
            .entry(location.to_string())
            .or_insert(Interaction {
                weight: 0.0,
                last_updated: at,
            });
        e.weight += weight;
        e.last_updated = at;
        Ok(())
    }

    fn row(&self, user: &str) -> Result<&BTreeMap<String, Interaction>, RecError> {
        self.users
            .get(user)
            .ok_or_else(|| RecError::UnknownUser(user.to_string()))
    }

    /// Cosine similarity of two user rows; 0 when either row is all zero.
    pub fn user_similarity(&self, u: &str, v: &str) -> Result<f64, RecError> {
        Ok(cosine(self.row(u)?, self.row(v)?))
    }

    /// Up to `k` users most similar to `u` with positive similarity, ordered
    /// by similarity descending then id ascending.
    pub fn neighbors(&self, u: &str, k: usize) -> Result<Vec<(&str, f64)>, RecError> {
        let ru = self.row(u)?;
        let mut out: Vec<(&str, f64)> = self
            .users
            .iter()
            .filter(|(id, _)| id.as_str() != u)
            .map(|(id, rv)| (id.as_str(), cosine(ru, rv)))
            .filter(|(_, s)| *s > 0.0)
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        out.truncate(k);
        Ok(out)
    }

    fn score_with(&self, neighbors: &[(&str, f64)], location: &str) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (v, s) in neighbors {
            num += s * self.weight(v, location);
            den += s;
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    /// Similarity-weighted mean of the k nearest neighbours' weights for
    /// `location`; 0 without neighbours.
    pub fn predict_score(&self, u: &str, location: &str, k: usize) -> Result<f64, RecError> {
        if !self.locations.contains_key(location) {
            return Err(RecError::UnknownLocation(location.to_string()));
        }
        let nb = self.neighbors(u, k)?;
        Ok(self.score_with(&nb, location))
    }

    /// Total weight each location has received from all users.
    pub fn popularity(&self) -> BTreeMap<&str, f64> {
        let mut pop: BTreeMap<&str, f64> = self.locations.keys().map(|k| (k.as_str(), 0.0)).collect();
        for row in self.users.values() {
            for (loc, i) in row {
                if let Some(p) = pop.get_mut(loc.as_str()) {
                    *p += i.weight;
                }
            }
        }
        pop
    }

    /// Ranks the locations `u` has not visited. Collaborative scores are
    /// min-max normalized over the candidates and blended with comfort as
    /// `(1 - lambda) * cf + lambda * comfort`. Users without interactions are
    /// scored by global popularity.
    pub fn recommend(
        &self,
        u: &str,
        params: RecommendParams,
        snapshot: Option<&StoreSnapshot>,
        target_date: NaiveDate,
    ) -> Result<Vec<Recommendation>, RecError> {
        let row = self.row(u)?;
        if !(0.0..=1.0).contains(&params.lambda) {
            return Err(RecError::BadLambda(params.lambda));
        }
        let snapshot = match snapshot {
            Some(s) if !s.is_empty() => Some(s),
            _ if params.lambda > 0.0 => return Err(RecError::EmptyStore),
            _ => None,
        };
        let candidates: Vec<(&str, GeoPoint)> = self
            .locations
            .iter()
            .filter(|(id, _)| row.get(*id).is_none_or(|i| i.weight == 0.0))
            .map(|(id, p)| (id.as_str(), *p))
            .collect();

        let cf: Vec<f64> = if row.values().all(|i| i.weight == 0.0) {
            let pop = self.popularity();
            candidates.iter().map(|(id, _)| pop[id]).collect()
        } else {
            let nb = self.neighbors(u, params.neighbors)?;
            candidates.iter().map(|(id, _)| self.score_with(&nb, id)).collect()
        };
        let lo = cf.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = cf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let norm = |x: f64| {
            if hi > lo {
                (x - lo) / (hi - lo)
            } else if hi > 0.0 {
                1.0
            } else {
                0.0
            }
        };

        let mut recs: Vec<Recommendation> = candidates
            .iter()
            .zip(&cf)
            .map(|((id, point), &score)| {
                let comfort = match snapshot {
                    Some(s) if params.lambda > 0.0 => {
                        let t = forecast_at(s, *point, target_date, "temperature").ok().map(|r| r.value);
                        let p = forecast_at(s, *point, target_date, "rainfall").ok().map(|r| r.value);
                        comfort_score(t, p)
                    }
                    _ => 0.0,
                };
                let cf_norm = norm(score);
                Recommendation {
                    location: id.to_string(),
                    cf_score: cf_norm,
                    comfort_score: comfort,
                    blended_score: (1.0 - params.lambda) * cf_norm + params.lambda * comfort,
                    rank: 0,
                }
            })
            .collect();
        recs.sort_by(|a, b| {
            b.blended_score
                .total_cmp(&a.blended_score)
                .then_with(|| a.location.cmp(&b.location))
        });
        recs.truncate(params.n);
        for (i, r) in recs.iter_mut().enumerate() {
            r.rank = i + 1;
        }
        Ok(recs)
    }

    pub fn records(&self) -> Vec<InteractionRecord> {
        self.users
            .iter()
            .flat_map(|(u, row)| {
                row.iter().map(move |(l, i)| InteractionRecord {
                    user: u.clone(),
                    location: l.clone(),
                    weight: i.weight,
                    last_updated: i.last_updated,
                })
            })
            .collect()
    }

    /// Writes one JSON record per (user, location) entry.
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<(), RecError> {
        for r in self.records() {
            serde_json::to_writer(&mut out, &r).map_err(|e| RecError::Io(e.to_string()))?;
            out.write_all(b"\n").map_err(|e| RecError::Io(e.to_string()))?;
        }
        Ok(())
    }

    /// Applies JSON-lines records; a later record for the same pair
    /// replaces the earlier one.
    pub fn read_jsonl(&mut self, input: impl BufRead) -> Result<(), RecError> {
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| RecError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let r: InteractionRecord = serde_json::from_str(&line)
                .map_err(|e| RecError::Io(format!("line {}: {e}", n + 1)))?;
            if !self.locations.contains_key(&r.location) {
                return Err(RecError::UnknownLocation(r.location));
            }
            if !(r.weight >= 0.0) || !r.weight.is_finite() {
                return Err(RecError::NonPositiveWeight(r.weight));
            }
            self.users.entry(r.user).or_default().insert(
                r.location,
                Interaction {
                    weight: r.weight,
                    last_updated: r.last_updated,
                },
            );
        }
        Ok(())
    }

    pub fn from_locations(records: &[LocationRecord]) -> Result<Self, RecError> {
        let mut m = Self::new();
        for r in records {
            let p = GeoPoint::new(r.lat, r.lon).map_err(|e| RecError::Io(format!("location {}: {e}", r.id)))?;
            m.register_location(&r.id, p);
        }
        Ok(m)
    }

    /// SHA-256 over locations and entries.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (id, p) in &self.locations {
            h.update(id.as_bytes());
            h.update(p.lat().to_le_bytes());
            h.update(p.lon().to_le_bytes());
        }
        for r in self.records() {
            h.update(r.user.as_bytes());
            h.update([0]);
            h.update(r.location.as_bytes());
            h.update([0]);
            h.update(r.weight.to_le_bytes());
        }
        format!("{:x}", h.finalize())
    }
}

/// Cosine similarity of two sparse non-negative rows, clamped to [0, 1].
/// Terms are summed in location order, so the result is exactly symmetric.
fn cosine(a: &BTreeMap<String, Interaction>, b: &BTreeMap<String, Interaction>) -> f64 {
    let norm = |r: &BTreeMap<String, Interaction>| r.values().map(|i| i.weight * i.weight).sum::<f64>().sqrt();
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut common: Vec<(&String, f64)> = small
        .iter()
        .filter_map(|(l, i)| large.get(l).map(|j| (l, i.weight * j.weight)))
        .collect();
    common.sort_by(|x, y| x.0.cmp(y.0));
    let dot: f64 = common.iter().map(|c| c.1).sum();
    (dot / (na * nb)).clamp(0.0, 1.0)
}
