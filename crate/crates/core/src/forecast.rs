//! Point forecasts from stored history.
//!
//! Three models, chosen by how far the target lies past the data:
//!
//! * persistence: the most recent observation carries forward, used up to
//!   [`PERSISTENCE_HORIZON_DAYS`] after it;
//! * climatology: the mean of the target month's historical aggregates, used
//!   through the year after the last observation;
//! * trend: an ordinary-least-squares line through the target month's yearly
//!   aggregates, extrapolated to the target year.
//!
//! Climatology and trend work on monthly aggregates: the monthly mean for
//! temperature and pressure, the monthly total for rainfall.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geo::GeoPoint;
use crate::render::GridField;
use crate::store::{CellKey, CellSeries, StoreError, StoreSnapshot};
use crate::time::{from_epoch_day, to_epoch_day, year_month, EpochDay};
use crate::units::VariableKind;

pub const PERSISTENCE_HORIZON_DAYS: i64 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForecastError {
    #[error("no data: {0}")]
    NoData(String),
    #[error("month {0} is not in 1..=12")]
    InvalidMonth(u32),
    #[error("need observations in at least 2 distinct years for month {month}, found {years}")]
    InsufficientYears { month: u32, years: usize },
    #[error("store is empty")]
    EmptyStore,
    #[error(transparent)]
    Store(StoreError),
}

impl From<StoreError> for ForecastError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::EmptyStore => ForecastError::EmptyStore,
            other => ForecastError::Store(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Persistence,
    Climatology,
    Trend,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Persistence => "persistence",
            Method::Climatology => "climatology",
            Method::Trend => "trend",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonthlyStats {
    pub month: u32,
    pub mean: f64,
    /// Population standard deviation across years.
    pub stddev: f64,
    /// Number of yearly aggregates.
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrendFit {
    /// Units per year.
    pub slope: f64,
    /// Fitted value at year 0.
    pub intercept: f64,
    pub n: usize,
    pub month: u32,
}

impl TrendFit {
    pub fn predict(&self, year: f64) -> f64 {
        self.intercept + self.slope * year
    }
}

/// Aggregates each (year, month): total for rainfall, mean otherwise.
pub fn monthly_aggregates(series: &CellSeries) -> BTreeMap<(i32, u32), f64> {
    let mut acc: BTreeMap<(i32, u32), (f64, usize)> = BTreeMap::new();
    for (&day, &v) in series.times.iter().zip(&series.values) {
        let e = acc.entry(year_month(day)).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    let sum = series.kind == VariableKind::Rainfall;
    acc.into_iter()
        .map(|(k, (s, n))| (k, if sum { s } else { s / n as f64 }))
        .collect()
}

fn month_values(series: &CellSeries, month: u32) -> Result<Vec<(i32, f64)>, ForecastError> {
    if !(1..=12).contains(&month) {
        return Err(ForecastError::InvalidMonth(month));
    }
    Ok(monthly_aggregates(series)
        .into_iter()
        .filter(|((_, m), _)| *m == month)
        .map(|((y, _), v)| (y, v))
        .collect())
}

/// Repeats the last observation for each of the `horizon_days` following days.
pub fn persistence_forecast(
    series: &CellSeries,
    horizon_days: u32,
) -> Result<Vec<(NaiveDate, f64)>, ForecastError> {
    let (last_day, last) = series
        .last()
        .ok_or_else(|| ForecastError::NoData("empty series".into()))?;
    Ok((1..=horizon_days as i64)
        .map(|h| (from_epoch_day(last_day + h), last))
        .collect())
}

/// Mean and population standard deviation of the month's yearly aggregates.
pub fn climatology(series: &CellSeries, month: u32) -> Result<MonthlyStats, ForecastError> {
    let vals = month_values(series, month)?;
    if vals.is_empty() {
        return Err(ForecastError::NoData(format!("no observations in month {month}")));
    }
    let n = vals.len();
    let mean = vals.iter().map(|v| v.1).sum::<f64>() / n as f64;
    let stddev = if n == 1 {
        0.0
    } else {
        (vals.iter().map(|v| (v.1 - mean).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    Ok(MonthlyStats {
        month,
        mean,
        stddev,
        n,
    })
}

/// Least-squares line through (x, y), centred for numerical stability.
/// Returns (slope, intercept at x = 0).
pub fn ols(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Fits a per-month linear trend over years and evaluates it at
/// `target_year`. Rainfall projections are clamped at zero.
pub fn trend_projection(
    series: &CellSeries,
    month: u32,
    target_year: i32,
) -> Result<(f64, TrendFit), ForecastError> {
    let vals = month_values(series, month)?;
    if vals.len() < 2 {
        return Err(ForecastError::InsufficientYears {
            month,
            years: vals.len(),
        });
    }
    let points: Vec<(f64, f64)> = vals.iter().map(|&(y, v)| (y as f64, v)).collect();
    let (slope, intercept) = ols(&points);
    let fit = TrendFit {
        slope,
        intercept,
        n: points.len(),
        month,
    };
    let mut value = fit.predict(target_year as f64);
    if series.kind == VariableKind::Rainfall {
        value = value.max(0.0);
    }
    if !value.is_finite() {
        return Err(ForecastError::NoData("trend fit is not finite".into()));
    }
    Ok((value, fit))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportCell {
    pub lat_idx: usize,
    pub lon_idx: usize,
    pub lat: f64,
    pub lon: f64,
}

/// Which observations a forecast rests on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Basis {
    /// Raw observations used.
    pub count: usize,
    pub last_observation: NaiveDate,
    /// Yearly aggregates used by climatology or trend.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregates: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForecastReport {
    pub point: GeoPoint,
    pub cell: ReportCell,
    pub variable: String,
    pub target_date: NaiveDate,
    pub value: f64,
    pub method: Method,
    pub basis: Basis,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trend: Option<TrendFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<&'static str>,
}

fn no_data(e: ForecastError) -> ForecastError {
    match e {
        ForecastError::InsufficientYears { month, years } => ForecastError::NoData(format!(
            "trend needs 2 years of month {month}, found {years}"
        )),
        other => other,
    }
}

/// Forecast for one grid cell. See the module docs for the dispatch rule.
pub fn forecast_cell(
    snapshot: &StoreSnapshot,
    cell: CellKey,
    target_date: NaiveDate,
    variable: &str,
) -> Result<ForecastReport, ForecastError> {
    if snapshot.is_empty() {
        return Err(ForecastError::EmptyStore);
    }
    let series = snapshot.series(cell, variable, ..)?;
    let center = snapshot.cell_center(cell)?;
    let (last_day, _) = series
        .last()
        .ok_or_else(|| ForecastError::NoData(format!("no {variable} observations at this cell")))?;
    let target = to_epoch_day(target_date);
    let mut report = ForecastReport {
        point: center,
        cell: ReportCell {
            lat_idx: cell.lat_idx,
            lon_idx: cell.lon_idx,
            lat: center.lat(),
            lon: center.lon(),
        },
        variable: series.variable.clone(),
        target_date,
        value: f64::NAN,
        method: Method::Persistence,
        basis: Basis {
            count: 0,
            last_observation: from_epoch_day(last_day),
            aggregates: None,
        },
        trend: None,
        note: None,
    };

    // most recent observation on or before the target
    let at = series.times.partition_point(|&d| d <= target);
    if at > 0 && target - series.times[at - 1] <= PERSISTENCE_HORIZON_DAYS {
        report.value = series.values[at - 1];
        report.basis.count = 1;
        report.basis.last_observation = from_epoch_day(series.times[at - 1]);
        return Ok(report);
    }

    let month = target_date.month();
    let in_month: Vec<EpochDay> = series
        .times
        .iter()
        .copied()
        .filter(|&d| year_month(d).1 == month)
        .collect();
    report.basis.count = in_month.len();
    if let Some(&d) = in_month.last() {
        report.basis.last_observation = from_epoch_day(d);
    }
    let last_year = from_epoch_day(last_day).year();
    if target_date.year() <= last_year + 1 {
        let stats = climatology(&series, month)?;
        report.method = Method::Climatology;
        report.value = stats.mean;
        report.basis.aggregates = Some(stats.n);
    } else {
        let (value, fit) = trend_projection(&series, month, target_date.year()).map_err(no_data)?;
        report.method = Method::Trend;
        report.value = value;
        report.basis.aggregates = Some(fit.n);
        report.trend = Some(fit);
        report.note = Some("linear trend extrapolation of monthly aggregates");
    }
    Ok(report)
}

/// Forecast at the grid cell nearest to `point`.
pub fn forecast_at(
    snapshot: &StoreSnapshot,
    point: GeoPoint,
    target_date: NaiveDate,
    variable: &str,
) -> Result<ForecastReport, ForecastError> {
    let cell = snapshot.nearest_cell(point)?;
    let mut report = forecast_cell(snapshot, cell, target_date, variable)?;
    report.point = point;
    Ok(report)
}

/// Forecast for every cell; cells without a usable forecast are masked.
pub fn forecast_grid(
    snapshot: &StoreSnapshot,
    variable: &str,
    target_date: NaiveDate,
) -> Result<GridField, ForecastError> {
    if snapshot.is_empty() {
        return Err(ForecastError::EmptyStore);
    }
    snapshot.resolve_variable(variable)?;
    let cells: Vec<CellKey> = snapshot.cells().collect();
    let values: Vec<Option<f64>> = cells
        .par_iter()
        .map(|&c| forecast_cell(snapshot, c, target_date, variable).ok().map(|r| r.value))
        .collect();
    Ok(GridField {
        lats: snapshot.lats().to_vec(),
        lons: snapshot.lons().to_vec(),
        mask: values.iter().map(Option::is_none).collect(),
        values: values.into_iter().map(|v| v.unwrap_or(0.0)).collect(),
    })
}
