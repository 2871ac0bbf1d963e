//! Ready-made gridded files built with the oracle writer.

use crate::netcdf::{OracleFile, OracleVar, Values};

/// One float field on a (time, lat, lon) grid.
pub struct GridVar<'a> {
    pub name: &'a str,
    pub units: &'a str,
    pub values: Vec<f32>,
    pub fill: Option<f32>,
}

/// Builds a file with a record `time` axis (days since `epoch`), float
/// `lat`/`lon` axes and one record variable per entry in `vars`.
pub fn grid_file(
    version: u8,
    epoch: &str,
    times: &[f64],
    lats: &[f32],
    lons: &[f32],
    vars: Vec<GridVar<'_>>,
) -> OracleFile {
    let mut f = OracleFile::new(version)
        .dim("time", 0)
        .dim("lat", lats.len())
        .dim("lon", lons.len())
        .numrecs(times.len())
        .gatt("title", Values::text("synthetic grid"))
        .var(
            OracleVar::new("time", &[0], Values::Double(times.to_vec()))
                .attr("units", Values::text(&format!("days since {epoch}"))),
        )
        .var(
            OracleVar::new("lat", &[1], Values::Float(lats.to_vec()))
                .attr("units", Values::text("degrees_north")),
        )
        .var(
            OracleVar::new("lon", &[2], Values::Float(lons.to_vec()))
                .attr("units", Values::text("degrees_east")),
        );
    for v in vars {
        assert_eq!(v.values.len(), times.len() * lats.len() * lons.len());
        let mut var = OracleVar::new(v.name, &[0, 1, 2], Values::Float(v.values))
            .attr("units", Values::text(v.units));
        if let Some(fill) = v.fill {
            var = var.attr("_FillValue", Values::Float(vec![fill]));
        }
        f = f.var(var);
    }
    f
}

/// The reference 2×2×3 fixture: time = {0, 1} days since 2000-01-01,
/// lat = {10, 20}, lon = {0, 10, 20}, float `temp` in °C with values
/// 1.5, 2.5, ... written in (time, lat, lon) order.
pub fn standard_grid(version: u8) -> (OracleFile, Vec<f32>) {
    let values: Vec<f32> = (0..12).map(|i| i as f32 + 0.5).collect();
    let f = grid_file(
        version,
        "2000-01-01",
        &[0.0, 1.0],
        &[10.0, 20.0],
        &[0.0, 10.0, 20.0],
        vec![GridVar {
            name: "temp",
            units: "degC",
            values: values.clone(),
            fill: Some(-999.0),
        }],
    );
    (f, values)
}

/// CSV in the `time,lat,lon,<var>` layout with one column per variable.
/// `value(var, t, lat, lon)` returns `None` for a missing cell.
pub fn grid_csv(
    variables: &[&str],
    days: &[i64],
    lats: &[f64],
    lons: &[f64],
    value: impl Fn(usize, usize, usize, usize) -> Option<f64>,
) -> String {
    let mut out = String::from("time,lat,lon");
    for v in variables {
        out.push(',');
        out.push_str(v);
    }
    out.push('\n');
    for (t, day) in days.iter().enumerate() {
        for (la, lat) in lats.iter().enumerate() {
            for (lo, lon) in lons.iter().enumerate() {
                out.push_str(&format!("{day},{lat},{lon}"));
                for k in 0..variables.len() {
                    out.push(',');
                    if let Some(x) = value(k, t, la, lo) {
                        out.push_str(&format!("{x:?}"));
                    }
                }
                out.push('\n');
            }
        }
    }
    out
}
