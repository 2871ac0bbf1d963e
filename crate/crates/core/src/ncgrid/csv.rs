use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;

use super::dataset::{Field, GridDataset};
use super::header::NcType;
use super::NcError;
use crate::units::VariableKind;

/// Shortest decimal that parses back to the same value of the source type.
fn fmt_value(out: &mut String, ty: NcType, v: f64) {
    let _ = match ty {
        NcType::Float => write!(out, "{}", v as f32),
        NcType::Double => write!(out, "{v}"),
        _ => write!(out, "{}", v as i64),
    };
}

/// Renders the requested fields as CSV: header `time,lat,lon,<vars...>`,
/// rows in time-major then lat then lon order, masked cells as empty fields.
/// Times are days since 1970-01-01.
pub fn convert_to_csv(ds: &GridDataset, variables: &[&str]) -> Result<String, NcError> {
    let fields: Vec<&Field> = variables
        .iter()
        .map(|name| {
            ds.fields
                .get(*name)
                .ok_or_else(|| NcError::UnknownVariable(name.to_string()))
        })
        .collect::<Result<_, _>>()?;

    let mut out = String::from("time,lat,lon");
    for name in variables {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');

    let [nt, nlat, nlon] = ds.shape();
    for t in 0..nt {
        for la in 0..nlat {
            for lo in 0..nlon {
                let i = (t * nlat + la) * nlon + lo;
                fmt_value(&mut out, NcType::Double, ds.times[t]);
                out.push(',');
                fmt_value(&mut out, ds.lat_type, ds.lats[la]);
                out.push(',');
                fmt_value(&mut out, ds.lon_type, ds.lons[lo]);
                for f in &fields {
                    out.push(',');
                    if !f.mask[i] {
                        fmt_value(&mut out, f.nc_type, f.values[i]);
                    }
                }
                out.push('\n');
            }
        }
    }
    Ok(out)
}

fn axis_index(axis: &mut Vec<f64>, lookup: &mut HashMap<u64, usize>, v: f64) -> usize {
    *lookup.entry(v.to_bits()).or_insert_with(|| {
        axis.push(v);
        axis.len() - 1
    })
}

fn parse_num(s: &str, line: usize, what: &str) -> Result<f64, NcError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| NcError::MalformedCsv(format!("line {line}: bad {what} {s:?}")))
}

impl GridDataset {
    /// Rebuilds a dataset from CSV in the layout written by [`convert_to_csv`].
    /// Axes follow first-appearance order; missing rows and empty fields are
    /// masked. Values are held as f64.
    pub fn from_csv(text: &str) -> Result<GridDataset, NcError> {
        let mut rdr = ::csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(::csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| NcError::MalformedCsv(e.to_string()))?
            .clone();
        let cols: Vec<&str> = headers.iter().collect();
        if cols.len() < 4 || cols[..3] != ["time", "lat", "lon"] {
            return Err(NcError::MalformedCsv(
                "header must start with time,lat,lon and name at least one variable".into(),
            ));
        }
        let names: Vec<String> = cols[3..].iter().map(|s| s.to_string()).collect();

        let (mut times, mut lats, mut lons) = (Vec::new(), Vec::new(), Vec::new());
        let (mut ti, mut lai, mut loi) = (HashMap::new(), HashMap::new(), HashMap::new());
        let mut cells: Vec<([usize; 3], Vec<Option<f64>>)> = Vec::new();
        for (n, rec) in rdr.records().enumerate() {
            let line = n + 2;
            let rec = rec.map_err(|e| NcError::MalformedCsv(e.to_string()))?;
            if rec.len() != cols.len() {
                return Err(NcError::MalformedCsv(format!(
                    "line {line}: expected {} fields, found {}",
                    cols.len(),
                    rec.len()
                )));
            }
            let t = axis_index(&mut times, &mut ti, parse_num(&rec[0], line, "time")?);
            let la = axis_index(&mut lats, &mut lai, parse_num(&rec[1], line, "lat")?);
            let lo = axis_index(&mut lons, &mut loi, parse_num(&rec[2], line, "lon")?);
            let vals = (3..rec.len())
                .map(|c| {
                    let s = &rec[c];
                    if s.is_empty() {
                        Ok(None)
                    } else {
                        parse_num(s, line, "value").map(Some)
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            cells.push(([t, la, lo], vals));
        }

        let n = times.len() * lats.len() * lons.len();
        let mut fields: BTreeMap<String, Field> = names
            .iter()
            .map(|name| {
                (
                    name.clone(),
                    Field {
                        kind: VariableKind::classify(name, None),
                        units: None,
                        nc_type: NcType::Double,
                        values: vec![0.0; n],
                        mask: vec![true; n],
                    },
                )
            })
            .collect();
        for ([t, la, lo], vals) in cells {
            let i = (t * lats.len() + la) * lons.len() + lo;
            for (name, v) in names.iter().zip(vals) {
                let f = fields.get_mut(name).unwrap();
                match v {
                    Some(x) => {
                        f.values[i] = x;
                        f.mask[i] = false;
                    }
                    None => {
                        f.values[i] = 0.0;
                        f.mask[i] = true;
                    }
                }
            }
        }

        let ds = GridDataset {
            lats,
            lons,
            times,
            lat_type: NcType::Double,
            lon_type: NcType::Double,
            time_units: None,
            fields,
            field_order: names,
        };
        ds.validate()?;
        Ok(ds)
    }
}
