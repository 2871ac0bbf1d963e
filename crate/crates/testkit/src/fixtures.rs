//! A small climate grid and road network shared by the service and CLI tests.

use crate::synth::grid_csv;

/// Days since 1970-01-01 for a proleptic Gregorian date.
pub fn epoch_day(y: i32, m: u32, d: u32) -> i64 {
    // days-from-civil
    let y = if m <= 2 { y - 1 } else { y } as i64;
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let m = m as i64;
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + d as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146097 + doe - 719468
}

/// Last observation day of [`climate_csv`].
pub const LAST_DAY: (i32, u32, u32) = (2011, 3, 1);

pub const LATS: [f64; 3] = [-0.3, 0.25, 5.0];
pub const LONS: [f64; 3] = [0.5, 1.5, 10.0];

/// Temperature on the last day: 21 at cell (0, 0), 3 °C lower per
/// row-major cell index.
pub fn last_day_temp(la: usize, lo: usize) -> f64 {
    21.0 - 3.0 * (la * 3 + lo) as f64
}

/// Rain on the last day: 10 mm along the middle row, under the northern arm
/// of [`DIAMOND_GEOJSON`].
pub fn last_day_rain(la: usize) -> f64 {
    if la == 1 {
        10.0
    } else {
        0.0
    }
}

/// A 3×3 grid with `temp` and `rain`: mid-July values for 2000..=2010 plus
/// one day at [`LAST_DAY`]. July temperature at cell (0, 0) is exactly
/// 10 + 0.02 (year - 2000), so its trend reaches 12.0 in 2100.
pub fn climate_csv() -> String {
    let mut days: Vec<i64> = (2000..=2010).map(|y| epoch_day(y, 7, 15)).collect();
    days.push(epoch_day(LAST_DAY.0, LAST_DAY.1, LAST_DAY.2));
    let last = days.len() - 1;
    grid_csv(&["temp", "rain"], &days, &LATS, &LONS, |k, t, la, lo| {
        let offset = (la * 3 + lo) as f64;
        Some(match (k, t == last) {
            (0, true) => last_day_temp(la, lo),
            (1, true) => last_day_rain(la),
            (0, false) => 10.0 + 0.02 * t as f64 + offset,
            _ => offset + 0.25 * t as f64,
        })
    })
}

/// Two arms from (0, 0) to (0, 2): a shorter northern one through
/// (0.5, 1) and a southern one through (-0.6, 1). Nodes are numbered
/// 0 (0,0), 1 north, 2 (0,2), 3 south. A separate segment from (5, 10)
/// to (5, 10.5) is unreachable from the diamond.
pub const DIAMOND_GEOJSON: &str = r#"{"type":"FeatureCollection","features":[
  {"type":"Feature","properties":{},"geometry":{"type":"LineString","coordinates":[[0,0],[1,0.5]]}},
  {"type":"Feature","properties":{},"geometry":{"type":"LineString","coordinates":[[1,0.5],[2,0]]}},
  {"type":"Feature","properties":{},"geometry":{"type":"LineString","coordinates":[[0,0],[1,-0.6]]}},
  {"type":"Feature","properties":{},"geometry":{"type":"LineString","coordinates":[[1,-0.6],[2,0]]}},
  {"type":"Feature","properties":{},"geometry":{"type":"LineString","coordinates":[[10,5],[10.5,5]]}}
]}"#;

/// `[{id, lat, lon}]`: L0..L2 along the southern row, L3 in the far row.
pub const LOCATIONS_JSON: &str = r#"[
  {"id":"L0","lat":-0.3,"lon":0.5},
  {"id":"L1","lat":-0.3,"lon":1.5},
  {"id":"L2","lat":-0.3,"lon":10.0},
  {"id":"L3","lat":5.0,"lon":0.5}
]"#;
