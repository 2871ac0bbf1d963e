//! Personalized gridded weather forecasting.
//!
//! The pipeline runs NetCDF classic files through [`ncgrid`] into a versioned
//! [`store`], then serves point forecasts ([`forecast`]), climate clusters
//! ([`cluster`]), location recommendations ([`recsys`]), weather-aware routes
//! ([`router`]) and heatmap rasters ([`render`]).

pub mod cluster;
pub mod forecast;
pub mod geo;
pub mod ncgrid;
pub mod recsys;
pub mod render;
pub mod router;
pub mod store;
pub mod time;
pub mod units;

pub use geo::GeoPoint;
pub use store::{CellKey, CellSeries, StoreSnapshot};
