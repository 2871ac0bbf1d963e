//! Randomized classic files covering every type code, both format versions,
//! record and fixed time axes, explicit and default fill values.

use rand::Rng;

use crate::netcdf::{fill, OracleFile, OracleVar, Values};

/// A gridded field as written, with which cells hold the fill value.
#[derive(Debug, Clone)]
pub struct ExpectedField {
    pub name: String,
    pub values: Values,
    pub masked: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct RandomGrid {
    pub file: OracleFile,
    pub version: u8,
    pub record_time: bool,
    /// Days since 1970-01-01.
    pub times: Vec<f64>,
    pub lats: Vec<f64>,
    pub lons: Vec<f64>,
    pub lat_double: bool,
    pub lon_double: bool,
    pub fields: Vec<ExpectedField>,
}

impl RandomGrid {
    pub fn cells(&self) -> usize {
        self.times.len() * self.lats.len() * self.lons.len()
    }
}

fn finite_f32(rng: &mut impl Rng, avoid: f32) -> f32 {
    loop {
        let v = f32::from_bits(rng.random());
        if v.is_finite() && v != avoid {
            return v;
        }
    }
}

fn finite_f64(rng: &mut impl Rng, avoid: f64) -> f64 {
    loop {
        let v = f64::from_bits(rng.random());
        if v.is_finite() && v != avoid {
            return v;
        }
    }
}

fn axis(rng: &mut impl Rng, n: usize, lo: i32, hi: i32) -> Vec<f64> {
    let step = rng.random_range(1..=5) as f64 * 0.5;
    let span = step * (n as f64 - 1.0);
    let start = rng.random_range(lo as f64..(hi as f64 - span)).floor();
    let mut v: Vec<f64> = (0..n).map(|i| start + step * i as f64).collect();
    if rng.random_bool(0.3) {
        v.reverse();
    }
    v
}

/// Builds one random grid file. Every file carries byte, char, short, int,
/// float and double data somewhere (fields or attributes), and always at
/// least a float field.
pub fn random_grid(rng: &mut impl Rng) -> RandomGrid {
    let version = if rng.random_bool(0.5) { 1 } else { 2 };
    let record_time = rng.random_bool(0.7);
    let nt = rng.random_range(1..=4);
    let nlat = rng.random_range(1..=5);
    let nlon = rng.random_range(1..=5);
    let n = nt * nlat * nlon;

    let epoch_offset = if rng.random_bool(0.5) { 0.0 } else { 10957.0 };
    let epoch = if epoch_offset == 0.0 { "1970-01-01" } else { "2000-01-01" };
    let mut raw_times = Vec::with_capacity(nt);
    let mut t = rng.random_range(0..400) as f64;
    for _ in 0..nt {
        raw_times.push(t);
        t += rng.random_range(1..=40) as f64 * 0.25;
    }
    let lats = axis(rng, nlat, -89, 89);
    let lons = axis(rng, nlon, -179, 179);
    let lat_double = rng.random_bool(0.5);
    let lon_double = rng.random_bool(0.5);
    let coord = |v: &[f64], double: bool| {
        if double {
            Values::Double(v.to_vec())
        } else {
            Values::Float(v.iter().map(|&x| x as f32).collect())
        }
    };

    let strlen = rng.random_range(1..=7);
    let mut file = OracleFile::new(version)
        .dim("time", if record_time { 0 } else { nt })
        .dim("lat", nlat)
        .dim("lon", nlon)
        .dim("strlen", strlen)
        .gatt("title", Values::text("random grid"))
        .gatt("flags", Values::Byte(vec![1, -2, 3]))
        .gatt("levels", Values::Short(vec![850, 500]))
        .gatt("count", Values::Int(vec![rng.random()]))
        .gatt("scale", Values::Float(vec![1.5]))
        .gatt("offset", Values::Double(vec![-0.25, 2.0]));
    if record_time {
        file = file.numrecs(nt);
    }
    file = file
        .var(
            OracleVar::new("time", &[0], Values::Double(raw_times.clone()))
                .attr("units", Values::text(&format!("days since {epoch}"))),
        )
        .var(OracleVar::new("lat", &[1], coord(&lats, lat_double)).attr("units", Values::text("degrees_north")))
        .var(OracleVar::new("lon", &[2], coord(&lons, lon_double)).attr("units", Values::text("degrees_east")));
    let label: Vec<u8> = (0..strlen).map(|_| rng.random_range(b'a'..=b'z')).collect();
    file = file.var(OracleVar::new("label", &[3], Values::Char(label)));

    let mut fields = Vec::new();
    for code in [1u32, 3, 4, 5, 6] {
        if code != 5 && !rng.random_bool(0.7) {
            continue;
        }
        let explicit = rng.random_bool(0.5);
        let masked: Vec<bool> = (0..n).map(|_| rng.random_bool(0.2)).collect();
        let (name, values, fill_attr) = match code {
            1 => {
                let f: i8 = if explicit { -100 } else { fill::BYTE };
                let v = masked
                    .iter()
                    .map(|&m| if m { f } else { rng.random_range(-99..=127) })
                    .collect();
                ("bytes", Values::Byte(v), Values::Byte(vec![f]))
            }
            3 => {
                let f: i16 = if explicit { -9999 } else { fill::SHORT };
                let v = masked
                    .iter()
                    .map(|&m| if m { f } else { rng.random_range(-9998..=i16::MAX) })
                    .collect();
                ("shorts", Values::Short(v), Values::Short(vec![f]))
            }
            4 => {
                let f: i32 = if explicit { -1 } else { fill::INT };
                let v = masked
                    .iter()
                    .map(|&m| if m { f } else { rng.random_range(0..=i32::MAX) })
                    .collect();
                ("ints", Values::Int(v), Values::Int(vec![f]))
            }
            5 => {
                let f: f32 = if explicit { -999.0 } else { fill::FLOAT };
                let v = masked
                    .iter()
                    .map(|&m| if m { f } else { finite_f32(rng, f) })
                    .collect();
                ("temp", Values::Float(v), Values::Float(vec![f]))
            }
            _ => {
                let f: f64 = if explicit { -1e30 } else { fill::DOUBLE };
                let v = masked
                    .iter()
                    .map(|&m| if m { f } else { finite_f64(rng, f) })
                    .collect();
                ("pressure", Values::Double(v), Values::Double(vec![f]))
            }
        };
        let mut var = OracleVar::new(name, &[0, 1, 2], values.clone()).attr("units", Values::text("1"));
        if explicit {
            var = var.attr("_FillValue", fill_attr);
        }
        file = file.var(var);
        fields.push(ExpectedField {
            name: name.to_string(),
            values,
            masked,
        });
    }

    RandomGrid {
        file,
        version,
        record_time,
        times: raw_times.iter().map(|t| t + epoch_offset).collect(),
        lats,
        lons,
        lat_double,
        lon_double,
        fields,
    }
}

fn check_cell(text: &str, values: &Values, i: usize, masked: bool) -> Result<(), String> {
    if masked {
        return if text.is_empty() {
            Ok(())
        } else {
            Err(format!("masked cell {i} holds {text:?}"))
        };
    }
    let same = match values {
        Values::Float(v) => text.parse::<f32>().map(|x| x.to_bits() == v[i].to_bits()),
        Values::Double(v) => text.parse::<f64>().map(|x| x.to_bits() == v[i].to_bits()),
        Values::Char(_) => return Err("char data has no CSV form".into()),
        other => {
            return match text.parse::<i64>() {
                Ok(x) if x as f64 == other.get(i) => Ok(()),
                _ => Err(format!("cell {i}: {text:?} != {}", other.get(i))),
            }
        }
    };
    match same {
        Ok(true) => Ok(()),
        _ => Err(format!("cell {i}: {text:?} does not round-trip to {}", values.get(i))),
    }
}

/// Checks CSV text against what was written: header, coordinates, and every
/// field value recovered at full precision of its source type.
pub fn verify_csv(grid: &RandomGrid, csv: &str) -> Result<(), String> {
    let mut lines = csv.lines();
    let mut expected_header = String::from("time,lat,lon");
    for f in &grid.fields {
        expected_header.push(',');
        expected_header.push_str(&f.name);
    }
    if lines.next() != Some(expected_header.as_str()) {
        return Err(format!("header mismatch, wanted {expected_header}"));
    }
    let (nlat, nlon) = (grid.lats.len(), grid.lons.len());
    let coord = |text: &str, want: f64, double: bool| -> bool {
        if double {
            text.parse::<f64>().is_ok_and(|x| x == want)
        } else {
            text.parse::<f32>().is_ok_and(|x| x == want as f32)
        }
    };
    for i in 0..grid.cells() {
        let line = lines.next().ok_or_else(|| format!("missing row {i}"))?;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 + grid.fields.len() {
            return Err(format!("row {i} has {} columns", cols.len()));
        }
        let (t, la, lo) = (i / (nlat * nlon), (i / nlon) % nlat, i % nlon);
        if cols[0].parse::<f64>() != Ok(grid.times[t]) {
            return Err(format!("row {i}: time {} != {}", cols[0], grid.times[t]));
        }
        if !coord(cols[1], grid.lats[la], grid.lat_double) || !coord(cols[2], grid.lons[lo], grid.lon_double) {
            return Err(format!("row {i}: coordinates {},{}", cols[1], cols[2]));
        }
        for (f, text) in grid.fields.iter().zip(&cols[3..]) {
            check_cell(text, &f.values, i, f.masked[i]).map_err(|e| format!("{}: {e}", f.name))?;
        }
    }
    match lines.next() {
        None => Ok(()),
        Some(extra) => Err(format!("unexpected trailing row {extra:?}")),
    }
}
