use std::collections::BTreeMap;

use chrono::{NaiveDate, NaiveTime};

use super::header::{parse_header, NcHeader, NcType, NcVariable};
use super::NcError;
use crate::time::to_epoch_day;
use crate::units::VariableKind;

/// One gridded variable, stored densely in [time][lat][lon] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub kind: VariableKind,
    pub units: Option<String>,
    /// Source element type; controls how values are printed.
    pub nc_type: NcType,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldView<'a> {
    pub values: &'a [f64],
    pub mask: &'a [bool],
    /// (times, lats, lons)
    pub shape: [usize; 3],
}

impl FieldView<'_> {
    pub fn get(&self, t: usize, lat: usize, lon: usize) -> Option<f64> {
        let i = (t * self.shape[1] + lat) * self.shape[2] + lon;
        (!self.mask[i]).then(|| self.values[i])
    }
}

/// Decoded contents of a gridded file.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDataset {
    pub lats: Vec<f64>,
    pub lons: Vec<f64>,
    /// Days since 1970-01-01, possibly fractional.
    pub times: Vec<f64>,
    pub lat_type: NcType,
    pub lon_type: NcType,
    /// The file's original `units` attribute on the time axis, if any.
    pub time_units: Option<String>,
    pub fields: BTreeMap<String, Field>,
    /// Field names in the order the source declared them.
    pub field_order: Vec<String>,
}

impl GridDataset {
    pub fn shape(&self) -> [usize; 3] {
        [self.times.len(), self.lats.len(), self.lons.len()]
    }

    pub fn read_variable(&self, name: &str) -> Result<FieldView<'_>, NcError> {
        let f = self
            .fields
            .get(name)
            .ok_or_else(|| NcError::UnknownVariable(name.to_string()))?;
        Ok(FieldView {
            values: &f.values,
            mask: &f.mask,
            shape: self.shape(),
        })
    }

    /// Checks axis ordering, coordinate ranges and field shapes.
    pub fn validate(&self) -> Result<(), NcError> {
        strictly_monotonic("lat", &self.lats)?;
        strictly_monotonic("lon", &self.lons)?;
        if self.times.windows(2).any(|w| !(w[0] < w[1])) || self.times.iter().any(|t| !t.is_finite()) {
            return Err(NcError::BadAxis("time axis is not strictly increasing".into()));
        }
        if let Some(l) = self.lats.iter().find(|l| !(-90.0..=90.0).contains(*l)) {
            return Err(NcError::BadAxis(format!("latitude {l} outside [-90, 90]")));
        }
        if let Some(l) = self.lons.iter().find(|l| !(-180.0..360.0).contains(*l)) {
            return Err(NcError::BadAxis(format!("longitude {l} outside [-180, 360)")));
        }
        let n: usize = self.shape().iter().product();
        for (name, f) in &self.fields {
            if f.values.len() != n || f.mask.len() != n {
                return Err(NcError::BadAxis(format!(
                    "field {name} has {} values, grid needs {n}",
                    f.values.len()
                )));
            }
        }
        Ok(())
    }
}

fn strictly_monotonic(name: &str, v: &[f64]) -> Result<(), NcError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(NcError::BadAxis(format!("{name} axis has non-finite values")));
    }
    let up = v.windows(2).all(|w| w[0] < w[1]);
    let down = v.windows(2).all(|w| w[0] > w[1]);
    if up || down {
        Ok(())
    } else {
        Err(NcError::BadAxis(format!("{name} axis is not strictly monotonic")))
    }
}

/// `<unit> since <date>[ <time>]` as (days per unit, offset in days since 1970).
fn parse_time_units(units: &str) -> Option<(f64, f64)> {
    let (unit, origin) = units.split_once(" since ")?;
    let scale = match unit.trim().to_ascii_lowercase().as_str() {
        "day" | "days" | "d" => 1.0,
        "hour" | "hours" | "h" | "hr" => 1.0 / 24.0,
        "minute" | "minutes" | "min" => 1.0 / 1440.0,
        "second" | "seconds" | "s" | "sec" => 1.0 / 86400.0,
        _ => return None,
    };
    let mut parts = origin.trim().splitn(2, [' ', 'T']);
    let date = NaiveDate::parse_from_str(parts.next()?, "%Y-%m-%d").ok()?;
    let mut offset = to_epoch_day(date) as f64;
    if let Some(tod) = parts.next() {
        let tod = tod.trim().trim_end_matches('Z');
        if !tod.is_empty() {
            let t = NaiveTime::parse_from_str(tod, "%H:%M:%S")
                .or_else(|_| NaiveTime::parse_from_str(tod, "%H:%M"))
                .or_else(|_| NaiveTime::parse_from_str(tod, "%H:%M:%S%.f"))
                .ok()?;
            offset += t.signed_duration_since(NaiveTime::MIN).num_milliseconds() as f64 / 86_400_000.0;
        }
    }
    Some((scale, offset))
}

fn is_named(v: &NcVariable, names: &[&str]) -> bool {
    names.iter().any(|n| v.name.eq_ignore_ascii_case(n))
}

fn coordinate<'h>(header: &'h NcHeader, names: &[&str]) -> Option<&'h NcVariable> {
    header
        .variables
        .iter()
        .find(|v| is_named(v, names) && v.dim_indices.len() == 1 && v.nc_type != NcType::Char)
}

/// Decodes a classic-format file into a [`GridDataset`].
///
/// Latitude and longitude come from 1-D variables named `lat`/`latitude` and
/// `lon`/`longitude` (any case). The record dimension, or else a dimension
/// named `time`, is the time axis. Every numeric variable shaped
/// (time, lat, lon), or (lat, lon) when there is no time axis, becomes a
/// field. Cells equal to `_FillValue` (or the type's default fill) are masked.
pub fn parse_classic(bytes: &[u8]) -> Result<GridDataset, NcError> {
    let header = parse_header(bytes)?;

    let lat_var = coordinate(&header, &["lat", "latitude"]).ok_or(NcError::MissingCoordinates)?;
    let lon_var = coordinate(&header, &["lon", "longitude"]).ok_or(NcError::MissingCoordinates)?;
    let lat_dim = lat_var.dim_indices[0];
    let lon_dim = lon_var.dim_indices[0];
    if lat_dim == lon_dim {
        return Err(NcError::BadAxis("lat and lon share a dimension".into()));
    }

    let time_dim = header
        .dimensions
        .iter()
        .position(|d| d.is_record())
        .or_else(|| {
            header
                .dimensions
                .iter()
                .position(|d| d.name.eq_ignore_ascii_case("time"))
        });

    let lats = header.read_values(bytes, lat_var);
    let lons = header.read_values(bytes, lon_var);

    let (times, time_units) = match time_dim {
        None => (vec![0.0], None),
        Some(td) => {
            let n = if header.dimensions[td].is_record() {
                header.numrecs
            } else {
                header.dimensions[td].length
            };
            let tvar = header.variables.iter().find(|v| {
                v.name == header.dimensions[td].name && v.dim_indices == [td] && v.nc_type != NcType::Char
            });
            match tvar {
                Some(tv) => {
                    let raw = header.read_values(bytes, tv);
                    let units = tv.text_attribute("units").map(str::to_string);
                    let (scale, offset) = match &units {
                        Some(u) => parse_time_units(u).ok_or_else(|| {
                            NcError::BadAxis(format!("unsupported time units {u:?}"))
                        })?,
                        None => (1.0, 0.0),
                    };
                    (raw.iter().map(|t| offset + t * scale).collect(), units)
                }
                None => ((0..n).map(|i| i as f64).collect(), None),
            }
        }
    };

    let mut fields = BTreeMap::new();
    let mut field_order = Vec::new();
    for v in &header.variables {
        if v.nc_type == NcType::Char
            || std::ptr::eq(v, lat_var)
            || std::ptr::eq(v, lon_var)
            || time_dim.is_some_and(|td| v.dim_indices == [td])
        {
            continue;
        }
        let wanted: Vec<usize> = match time_dim {
            Some(td) => vec![td, lat_dim, lon_dim],
            None => vec![lat_dim, lon_dim],
        };
        if v.dim_indices != wanted {
            continue;
        }
        let values = header.read_values(bytes, v);
        let fill = v
            .attribute("_FillValue")
            .and_then(|a| a.first_number())
            .unwrap_or_else(|| v.nc_type.default_fill());
        let mask = values.iter().map(|&x| x == fill || x.is_nan()).collect();
        let units = v.text_attribute("units").map(str::to_string);
        field_order.push(v.name.clone());
        fields.insert(
            v.name.clone(),
            Field {
                kind: VariableKind::classify(&v.name, units.as_deref()),
                units,
                nc_type: v.nc_type,
                values,
                mask,
            },
        );
    }

    let ds = GridDataset {
        lats,
        lons,
        times,
        lat_type: lat_var.nc_type,
        lon_type: lon_var.nc_type,
        time_units,
        fields,
        field_order,
    };
    ds.validate()?;
    Ok(ds)
}
