//! Forecast heatmaps shared by `/v1/grid` and the `render` command, so both
//! produce the same bytes for the same inputs.

use chrono::NaiveDate;
use serde::Serialize;
use skycast_core::forecast::{forecast_grid, ForecastError};
use skycast_core::render::{render_field, GridField, Palette, RasterImage, RenderError, Sidecar};
use skycast_core::units::VariableKind;
use skycast_core::StoreSnapshot;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("unknown palette {0:?}")]
    UnknownPalette(String),
    #[error("no cell has a forecast for {variable} on {date}")]
    NoData { variable: String, date: NaiveDate },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRequest {
    pub variable: String,
    pub date: NaiveDate,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    /// Defaults by variable kind.
    pub palette: Option<String>,
    pub scale: usize,
}

impl GridRequest {
    pub fn new(variable: &str, date: NaiveDate) -> Self {
        Self {
            variable: variable.to_string(),
            date,
            lo: None,
            hi: None,
            palette: None,
            scale: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutput {
    pub field: GridField,
    pub lo: f64,
    pub hi: f64,
    pub palette: Palette,
    pub variable: String,
}

/// JSON form: masked cells carry `null`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridJson {
    pub variable: String,
    pub date: NaiveDate,
    pub lats: Vec<f64>,
    pub lons: Vec<f64>,
    pub values: Vec<Option<f64>>,
    pub mask: Vec<bool>,
    pub lo: f64,
    pub hi: f64,
    pub palette: String,
}

pub fn default_palette(kind: VariableKind) -> Palette {
    match kind {
        VariableKind::Temperature => Palette::thermal(),
        VariableKind::Rainfall => Palette::rain(),
        _ => Palette::grayscale(),
    }
}

/// Forecasts every cell and resolves the colour range. A bound not given
/// comes from the field's own range.
pub fn forecast_field(snapshot: &StoreSnapshot, req: &GridRequest) -> Result<GridOutput, GridError> {
    let field = forecast_grid(snapshot, &req.variable, req.date)?;
    let variable = snapshot.resolve_variable(&req.variable).map_err(ForecastError::from)?.to_string();
    let palette = match &req.palette {
        Some(name) => Palette::by_name(name).ok_or_else(|| GridError::UnknownPalette(name.clone()))?,
        None => default_palette(snapshot.variable_kind(&variable).map_err(ForecastError::from)?),
    };
    let (lo, hi) = match (req.lo, req.hi, field.auto_range()) {
        (Some(lo), Some(hi), _) => (lo, hi),
        (lo, hi, Some((alo, ahi))) => (lo.unwrap_or(alo), hi.unwrap_or(ahi)),
        (_, _, None) => {
            return Err(GridError::NoData {
                variable,
                date: req.date,
            })
        }
    };
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(RenderError::DegenerateRange { lo, hi }.into());
    }
    Ok(GridOutput {
        field,
        lo,
        hi,
        palette,
        variable,
    })
}

impl GridOutput {
    pub fn raster(&self, scale: usize) -> Result<RasterImage, GridError> {
        Ok(render_field(&self.field, self.lo, self.hi, &self.palette, scale)?)
    }

    pub fn sidecar(&self, date: NaiveDate) -> Sidecar {
        Sidecar {
            variable: self.variable.clone(),
            date: date.to_string(),
            lo: self.lo,
            hi: self.hi,
            palette: self.palette.name().to_string(),
            grid_shape: [self.field.lats.len(), self.field.lons.len()],
        }
    }

    pub fn json(&self, date: NaiveDate) -> GridJson {
        let f = &self.field;
        GridJson {
            variable: self.variable.clone(),
            date,
            lats: f.lats.clone(),
            lons: f.lons.clone(),
            values: f
                .values
                .iter()
                .zip(&f.mask)
                .map(|(&v, &m)| (!m && v.is_finite()).then_some(v))
                .collect(),
            mask: f.mask.clone(),
            lo: self.lo,
            hi: self.hi,
            palette: self.palette.name().to_string(),
        }
    }
}
