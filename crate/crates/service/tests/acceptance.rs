//! End-to-end acceptance run. Prints one PASS or FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::panic::AssertUnwindSafe;
use std::sync::{Arc, Barrier};
use std::time::{Duration, Instant};

use chrono::{NaiveDate, TimeZone, Utc};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use skycast_core::cluster::{kmeans_fit, FeatureMatrix};
use skycast_core::forecast::{forecast_at, ols, persistence_forecast, Method};
use skycast_core::ncgrid::{convert_to_csv, parse_classic, parse_header, AttrValue, NcError};
use skycast_core::recsys::{InteractionMatrix, RecommendParams};
use skycast_core::render::{color_of, encode_ppm, render_field, GridField, Palette};
use skycast_core::router::{best_path, best_path_with, EdgeWeather, RoadGraph, WeatherWeights};
use skycast_core::store::SharedStore;
use skycast_core::time::to_epoch_day;
use skycast_core::units::VariableKind;
use skycast_core::{CellKey, CellSeries, GeoPoint, StoreSnapshot};
use skycast_service::provider::{poll_provider, ReplayProvider};
use skycast_service::AppState;
use skycast_testkit::oracles::{
    adjusted_rand_index, cf_top1, cheapest_simple_path, normal_equations, palette_color, random_weights, rel,
    three_blobs,
};
use skycast_testkit::random::{random_grid, verify_csv};
use skycast_testkit::synth::{grid_csv, standard_grid};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err(format!($($arg)*));
        }
    };
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure!(took < limit, "took {took:.2?}, limit {limit:?}");
    Ok(())
}

fn is_format_error(e: &NcError) -> bool {
    matches!(e, NcError::MalformedHeader(_) | NcError::TruncatedData(_) | NcError::UnsupportedFormat)
}

fn netcdf_round_trip() -> Check {
    let start = Instant::now();
    let (mut versions, mut types) = (BTreeSet::new(), BTreeSet::new());
    let (mut record, mut fills, mut cells, mut mutations) = (false, 0usize, 0usize, 0usize);
    for seed in 0..50 {
        let g = random_grid(&mut ChaCha8Rng::seed_from_u64(seed));
        versions.insert(g.version);
        record |= g.record_time;
        let bytes = g.file.to_bytes();
        let header = parse_header(&bytes).map_err(|e| format!("seed {seed}: {e}"))?;
        let attrs = header.attributes.iter().chain(header.variables.iter().flat_map(|v| &v.attributes));
        for (_, a) in attrs {
            if let AttrValue::Numbers(t, _) = a {
                types.insert(format!("{t:?}"));
            } else {
                types.insert("Char".into());
            }
        }
        types.extend(header.variables.iter().map(|v| format!("{:?}", v.nc_type)));

        let ds = parse_classic(&bytes).map_err(|e| format!("seed {seed}: {e}"))?;
        let names: Vec<&str> = g.fields.iter().map(|f| f.name.as_str()).collect();
        let csv = convert_to_csv(&ds, &names).map_err(|e| format!("seed {seed}: {e}"))?;
        verify_csv(&g, &csv).map_err(|e| format!("seed {seed}: {e}"))?;
        fills += g.fields.iter().flat_map(|f| &f.masked).filter(|m| **m).count();
        cells += g.cells();

        for cut in (0..bytes.len()).step_by(1 + bytes.len() / 97) {
            match parse_classic(&bytes[..cut]) {
                Err(e) if is_format_error(&e) => mutations += 1,
                other => return Err(format!("seed {seed} cut {cut}: {other:?}")),
            }
        }
        let mut bad_tag = bytes.clone();
        bad_tag[11] = 0x0D;
        ensure!(
            matches!(parse_classic(&bad_tag), Err(NcError::MalformedHeader(_))),
            "seed {seed}: bad tag accepted"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let mut b = bytes.clone();
            let i = rng.random_range(0..b.len());
            b[i] = rng.random();
            let _ = std::panic::catch_unwind(|| parse_classic(&b)).map_err(|_| format!("seed {seed}: panic on byte {i}"))?;
        }
        mutations += 21;
    }
    for version in [1, 2] {
        let good = standard_grid(version).0.to_bytes();
        let pos = good.windows(4).position(|w| w == b"lat\0").unwrap();
        let mut bad_pad = good.clone();
        bad_pad[pos + 3] = b'x';
        ensure!(
            matches!(parse_classic(&bad_pad), Err(NcError::MalformedHeader(_))),
            "CDF-{version}: bad padding accepted"
        );
    }
    ensure!(versions.len() == 2, "versions seen: {versions:?}");
    ensure!(types.len() == 6, "type codes seen: {types:?}");
    ensure!(record && fills > 0, "record axis {record}, fills {fills}");
    within(start, Duration::from_secs(10))?;
    Ok(format!("50 files, {cells} cells, {fills} fills, {mutations} mutations"))
}

fn persistence_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..1000 {
        let n = rng.random_range(1..60);
        let mut day = rng.random_range(-20_000i64..30_000);
        let mut times = Vec::with_capacity(n);
        for _ in 0..n {
            times.push(day);
            day += rng.random_range(1..40);
        }
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-1e4..1e4)).collect();
        let last = *values.last().unwrap();
        let series = CellSeries::new(VariableKind::Temperature, times.clone(), values);
        let horizon = rng.random_range(1..10);
        let f = persistence_forecast(&series, horizon).map_err(|e| e.to_string())?;
        ensure!(f.len() == horizon as usize, "case {case}: {} days", f.len());
        for (i, (d, v)) in f.iter().enumerate() {
            ensure!(v.to_bits() == last.to_bits(), "case {case}: {v} != {last}");
            ensure!(to_epoch_day(*d) == times[n - 1] + 1 + i as i64, "case {case}: date {d}");
        }
    }
    // through the store and the dispatcher, with values a column holds exactly
    for case in 0..50 {
        let n = rng.random_range(1..20);
        let days: Vec<i64> = (0..n).map(|i| 15_000 + 3 * i as i64).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-40.0f32..40.0) as f64).collect();
        let csv = grid_csv(&["temp"], &days, &[10.0], &[20.0], |_, t, _, _| Some(values[t]));
        let snap = StoreSnapshot::empty().ingest_csv(&csv, "acceptance").map_err(|e| e.to_string())?;
        let target = skycast_core::time::from_epoch_day(days[n - 1] + 1);
        let r = forecast_at(&snap, GeoPoint::new(10.0, 20.0).unwrap(), target, "temperature")
            .map_err(|e| e.to_string())?;
        ensure!(r.method == Method::Persistence, "case {case}: {:?}", r.method);
        ensure!(r.value.to_bits() == values[n - 1].to_bits(), "case {case}: {} != {}", r.value, values[n - 1]);
    }
    Ok("1000 series and 50 stored cells repeat their last value".into())
}

fn trend_fit() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut exact = 0;
    while exact < 200 {
        let b = rng.random_range(0.01..2.0) * if rng.random_bool(0.5) { -1.0 } else { 1.0 };
        let a: f64 = rng.random_range(-500.0..500.0);
        if a.abs() < 1.0 {
            continue;
        }
        let first = rng.random_range(1900..2000);
        let pts: Vec<(f64, f64)> = (first..first + rng.random_range(2..40))
            .map(|y| (y as f64, a + b * y as f64))
            .collect();
        let (slope, intercept) = ols(&pts);
        ensure!(rel(slope, b) < 1e-9, "slope {slope} vs {b}");
        ensure!(rel(intercept, a) < 1e-9, "intercept {intercept} vs {a}");
        exact += 1;
    }
    for case in 0..500 {
        let b = rng.random_range(-0.5..0.5);
        let a = rng.random_range(1.0..500.0) * if rng.random_bool(0.5) { -1.0 } else { 1.0 };
        let mut years: Vec<i32> = (0..rng.random_range(2..60)).map(|_| rng.random_range(1900..2100)).collect();
        years.sort();
        years.dedup();
        if years.len() < 2 {
            continue;
        }
        let pts: Vec<(f64, f64)> = years
            .iter()
            .map(|&y| (y as f64, a + b * y as f64 + rng.random_range(-3.0..3.0)))
            .collect();
        let (slope, intercept) = ols(&pts);
        let (ob, oa) = normal_equations(&pts);
        ensure!(rel(slope, ob) < 1e-9, "case {case}: slope {slope} vs {ob}");
        ensure!(rel(intercept, oa) < 1e-9, "case {case}: intercept {intercept} vs {oa}");
    }
    let s = fixture_state();
    let snap = s.snapshot();
    let r = forecast_at(&snap, GeoPoint::new(-0.3, 0.5).unwrap(), NaiveDate::from_ymd_opt(2100, 7, 1).unwrap(), "temp")
        .map_err(|e| e.to_string())?;
    ensure!(r.method == Method::Trend, "method {:?}", r.method);
    ensure!(rel(r.value, 12.0) < 1e-9, "July 2100 = {}", r.value);
    let reply = block_on(async { get(&app(&s), "/v1/forecast?lat=-0.3&lon=0.5&date=7/2100&var=temp").await });
    let v = reply.json()["value"].as_f64().ok_or("no value")?;
    ensure!(rel(v, 12.0) < 1e-9, "served July 2100 = {v}");
    Ok(format!("{exact} exact lines, 500 noisy fits, July 2100 = {}", r.value))
}

fn features(rows: Vec<Vec<f64>>) -> FeatureMatrix {
    let n = rows.len();
    let names = ["f0", "f1", "f2", "f3"];
    let d = rows.first().map_or(0, Vec::len);
    FeatureMatrix::from_rows(&names[..d], (0..n).map(|i| CellKey::new(i, 0)).collect(), (0..n).collect(), rows)
}

fn kmeans() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut runs = 0;
    let mut check = |fm: &FeatureMatrix, k: usize, seed: u64| -> Result<(), String> {
        let m = kmeans_fit(fm, k, seed).map_err(|e| e.to_string())?;
        for w in m.inertia_history.windows(2) {
            ensure!(w[1] <= w[0], "inertia rose at k={k} seed={seed}: {:?}", m.inertia_history);
        }
        let again = kmeans_fit(fm, k, seed).map_err(|e| e.to_string())?;
        let (a, b) = (serde_json::to_vec(&m.export()).unwrap(), serde_json::to_vec(&again.export()).unwrap());
        ensure!(a == b, "refit differs at k={k} seed={seed}");
        runs += 1;
        Ok(())
    };
    for _ in 0..100 {
        let n = rng.random_range(1..40);
        let d = rng.random_range(1..=4);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(0..6) as f64 * rng.random_range(0.5..3.0)).collect())
            .collect();
        let k = rng.random_range(1..=n.min(6));
        check(&features(rows), k, rng.random())?;
    }
    let mut aris = Vec::new();
    for seed in 0..10 {
        let (rows, truth) = three_blobs(1000 + seed);
        let fm = features(rows);
        check(&fm, 3, seed)?;
        aris.push(adjusted_rand_index(&kmeans_fit(&fm, 3, seed).unwrap().assignments, &truth));
    }
    aris.sort_by(f64::total_cmp);
    let median = (aris[4] + aris[5]) / 2.0;
    ensure!(median >= 0.9, "median ARI {median}: {aris:?}");
    within(start, Duration::from_secs(5))?;
    Ok(format!("{runs} fits monotone and repeatable, median ARI {median:.4}"))
}

fn cf_matrix(w: &[Vec<f64>]) -> InteractionMatrix {
    let mut m = InteractionMatrix::new();
    for j in 0..w.first().map_or(0, Vec::len) {
        m.register_location(&format!("L{j}"), GeoPoint::new(0.0, j as f64).unwrap());
    }
    let at = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
    for (i, row) in w.iter().enumerate() {
        m.add_user(&format!("u{i}"));
        for (j, &x) in row.iter().enumerate() {
            if x > 0.0 {
                m.record_interaction_at(&format!("u{i}"), &format!("L{j}"), x, at).unwrap();
            }
        }
    }
    m
}

fn ranking(m: &InteractionMatrix, user: &str) -> Result<Vec<String>, String> {
    let params = RecommendParams { n: 10, lambda: 0.0, ..Default::default() };
    let day = NaiveDate::from_ymd_opt(2020, 6, 1).unwrap();
    let recs = m.recommend(user, params, None, day).map_err(|e| e.to_string())?;
    Ok(recs.into_iter().map(|r| r.location).collect())
}

fn collaborative_filter() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut users = 0;
    for case in 0..500 {
        let w = random_weights(&mut rng);
        let m = cf_matrix(&w);
        for u in 0..w.len() {
            let user = format!("u{u}");
            let ranked = ranking(&m, &user)?;
            let want = cf_top1(&w, u).map(|j| format!("L{j}"));
            ensure!(ranked.first() == want.as_ref(), "case {case} user {u}: {ranked:?} vs {want:?} in {w:?}");
            for l in &ranked {
                ensure!(m.weight(&user, l) == 0.0, "case {case}: visited {l} recommended to {user}");
            }
            for v in 0..w.len() {
                let a = m.user_similarity(&user, &format!("u{v}")).map_err(|e| e.to_string())?;
                let b = m.user_similarity(&format!("u{v}"), &user).map_err(|e| e.to_string())?;
                ensure!(a.to_bits() == b.to_bits(), "case {case}: sim({u},{v}) {a} != {b}");
            }
            let mut scaled = w.clone();
            let c = rng.random_range(0.01..100.0);
            scaled[u].iter_mut().for_each(|x| *x *= c);
            ensure!(ranking(&cf_matrix(&scaled), &user)? == ranked, "case {case}: scaling user {u} by {c}");
            users += 1;
        }
    }
    Ok(format!("500 matrices, {users} users"))
}

fn weather_cost(len: f64, w: &EdgeWeather, k: &WeatherWeights) -> f64 {
    let rain = k.alpha * (w.rain_mm / k.p_ref).min(k.rain_cap);
    let snow = if w.rain_mm > 0.0 && w.temp_c.is_some_and(|t| t <= k.t_snow) { k.beta } else { 0.0 };
    len * (1.0 + rain + snow)
}

fn router() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let depart = NaiveDate::from_ymd_opt(2024, 3, 2).unwrap();
    let k = WeatherWeights::default();
    for case in 0..200 {
        let n = rng.random_range(2..=8);
        let mut g = RoadGraph::new();
        for i in 0..n {
            g.add_node(GeoPoint::new(rng.random_range(-10.0..10.0), i as f64).unwrap());
        }
        for i in 1..n {
            let j = rng.random_range(0..i);
            g.add_edge(i, j, rng.random_range(0.5..20.0)).unwrap();
        }
        for _ in 0..rng.random_range(0..=2 * n) {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if a != b {
                g.add_edge(a, b, rng.random_range(0.5..20.0)).unwrap();
            }
        }
        let wx: Vec<EdgeWeather> = (0..g.edges().len())
            .map(|_| EdgeWeather {
                rain_mm: if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..30.0) },
                temp_c: if rng.random_bool(0.2) { None } else { Some(rng.random_range(-10.0..20.0)) },
            })
            .collect();
        let (s, t) = (rng.random_range(0..n), rng.random_range(0..n));

        let costs: Vec<_> =
            g.edges().iter().zip(&wx).map(|(e, w)| (e.a, e.b, weather_cost(e.length_km, w, &k))).collect();
        let (want, _) = cheapest_simple_path(&costs, s, t).ok_or("oracle found no path")?;
        let r = best_path_with(&g, s, t, depart, &wx, &k).map_err(|e| format!("case {case}: {e}"))?;
        ensure!(
            (r.total_cost - want).abs() <= 1e-9 * want.max(1.0),
            "case {case}: cost {} vs {want}",
            r.total_cost
        );

        let dry = vec![EdgeWeather { rain_mm: 0.0, temp_c: Some(-5.0) }; wx.len()];
        let lengths: Vec<_> = g.edges().iter().map(|e| (e.a, e.b, e.length_km)).collect();
        let (shortest, _) = cheapest_simple_path(&lengths, s, t).unwrap();
        let r = best_path_with(&g, s, t, depart, &dry, &k).map_err(|e| e.to_string())?;
        ensure!(
            (r.total_cost - shortest).abs() <= 1e-9 * shortest.max(1.0) && r.total_cost == r.total_length,
            "case {case}: dry cost {} length {} vs shortest {shortest}",
            r.total_cost,
            r.total_length
        );
    }
    let g = fixture_graph();
    let snap = fixture_snapshot();
    let (from, to) = (GeoPoint::new(0.0, 0.0).unwrap(), GeoPoint::new(0.0, 2.0).unwrap());
    let r = best_path(&g, from, to, DEPART, Some(&snap), &k).map_err(|e| e.to_string())?;
    ensure!(r.nodes == [0, 3, 2], "diamond took {:?}", r.nodes);
    let blind = WeatherWeights { alpha: 0.0, beta: 0.0, ..k };
    let r = best_path(&g, from, to, DEPART, Some(&snap), &blind).map_err(|e| e.to_string())?;
    ensure!(r.nodes == [0, 1, 2], "weather-blind diamond took {:?}", r.nodes);
    Ok("200 graphs match enumeration, dry runs match shortest length, diamond takes the dry arm".into())
}

fn render() -> Check {
    let field = GridField {
        lats: vec![-15.0, -5.0, 5.0, 15.0],
        lons: vec![100.0, 110.0, 120.0, 130.0],
        values: (0..16).map(|i| -10.0 + 2.5 * i as f64).collect(),
        mask: (0..16).map(|i| i == 6).collect(),
    };
    let golden = "ed3f98b6f26dcc8c7e76c76a33a112d35a703fff5bfa9568633dce4a29e5a8cb";
    for _ in 0..3 {
        let img = render_field(&field, -10.0, 27.5, &Palette::thermal(), 1).map_err(|e| e.to_string())?;
        let hash = format!("{:x}", Sha256::digest(encode_ppm(&img)));
        ensure!(hash == golden, "thermal 4x4 hashed to {hash}");
    }
    let g = Palette::grayscale();
    let vectors = [
        (0.5, 0.0, 1.0, &g, [128, 128, 128]),
        (0.25, 0.0, 1.0, &g, [64, 64, 64]),
        (10.0, 10.0, 20.0, &g, [0, 0, 0]),
        (20.0, 10.0, 20.0, &g, [255, 255, 255]),
    ];
    for (v, lo, hi, p, want) in vectors {
        ensure!(color_of(v, lo, hi, p) == Ok(want), "color_of({v}, {lo}, {hi})");
    }
    ensure!(color_of(0.25, 0.0, 1.0, &Palette::thermal()) == Ok([152, 155, 202]), "thermal 0.25");
    let mut checked = 6;
    for name in ["thermal", "rain", "grayscale"] {
        let p = Palette::by_name(name).ok_or(name)?;
        let anchors = p.anchors();
        let (first, last) = (anchors[0].1, anchors[anchors.len() - 1].1);
        ensure!(color_of(-3.0, -3.0, 5.0, &p) == Ok(first), "{name} low end");
        ensure!(color_of(5.0, -3.0, 5.0, &p) == Ok(last), "{name} high end");
        ensure!(color_of(1.0, -3.0, 5.0, &p) == Ok(palette_color(1.0, -3.0, 5.0, anchors)), "{name} midpoint");
        checked += 3;
    }
    Ok(format!("golden hash stable, {checked} colour vectors"))
}

fn block_on<F: std::future::Future>(f: F) -> F::Output {
    tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap().block_on(f)
}

fn digests(s: &AppState) -> (u64, String, String) {
    let snap = s.snapshot();
    (snap.version(), snap.content_digest(), s.matrix().digest())
}

fn service_contracts() -> Result<usize, String> {
    let d = date_param(DEPART);
    let full = fixture_state();
    let empty = Arc::new(AppState::new(StoreSnapshot::empty(), fixture_matrix(), Some(fixture_graph())));
    let no_graph = Arc::new(AppState::new(fixture_snapshot(), fixture_matrix(), None));
    full.record_interaction("ana", "L0", 2.0).map_err(|e| e.to_string())?;
    empty.record_interaction("ana", "L0", 2.0).map_err(|e| e.to_string())?;

    let gets: Vec<(&Arc<AppState>, String, u16, &str)> = vec![
        (&full, "/healthz".into(), 200, ""),
        (&full, format!("/v1/forecast?lat=-0.3&lon=0.5&date={d}&var=temp"), 200, ""),
        (&full, format!("/v1/forecast?lat=91&lon=0&date={d}&var=temp"), 400, "bad_coords"),
        (&full, "/v1/forecast?lat=0&lon=0&var=temp".into(), 400, "missing_param"),
        (&full, "/v1/forecast?lat=0&lon=0&date=soon&var=temp".into(), 400, "bad_date"),
        (&full, format!("/v1/forecast?lat=0&lon=0&date={d}&var=humidity"), 400, "unknown_variable"),
        (&full, "/v1/forecast?lat=0&lon=0&date=2100-03-01&var=temp".into(), 404, "no_data"),
        (&empty, format!("/v1/forecast?lat=0&lon=0&date={d}&var=temp"), 503, "store_empty"),
        (&full, format!("/v1/route?from_lat=0&from_lon=0&to_lat=0&to_lon=2&depart={d}"), 200, ""),
        (&full, format!("/v1/route?from_lat=0&from_lon=0&to_lat=5&to_lon=10.5&depart={d}"), 404, "no_route"),
        (&full, "/v1/route?from_lat=0&from_lon=0&to_lat=0&to_lon=2".into(), 400, "missing_param"),
        (&full, format!("/v1/route?from_lat=95&from_lon=0&to_lat=0&to_lon=2&depart={d}"), 400, "bad_coords"),
        (&full, "/v1/route?from_lat=0&from_lon=0&to_lat=0&to_lon=2&depart=2011-13-45".into(), 400, "bad_date"),
        (&empty, format!("/v1/route?from_lat=0&from_lon=0&to_lat=0&to_lon=2&depart={d}"), 503, "store_empty"),
        (&no_graph, format!("/v1/route?from_lat=0&from_lon=0&to_lat=0&to_lon=2&depart={d}"), 503, "graph_missing"),
        (&full, format!("/v1/recommendations?user=ana&lambda=0.3&date={d}"), 200, ""),
        (&full, format!("/v1/recommendations?user=zed&date={d}"), 404, "unknown_user"),
        (&full, format!("/v1/recommendations?date={d}"), 400, "missing_param"),
        (&full, format!("/v1/recommendations?user=ana&lambda=1.5&date={d}"), 400, "bad_lambda"),
        (&empty, format!("/v1/recommendations?user=ana&lambda=0.5&date={d}"), 503, "store_empty"),
        (&full, format!("/v1/grid?var=temp&date={d}"), 200, ""),
        (&full, format!("/v1/grid?var=temp&date={d}&format=ppm&scale=2"), 200, ""),
        (&full, format!("/v1/grid?var=temp&date={d}&format=png"), 400, "bad_format"),
        (&full, format!("/v1/grid?date={d}"), 400, "missing_param"),
        (&full, format!("/v1/grid?var=snow&date={d}"), 400, "unknown_variable"),
        (&full, format!("/v1/grid?var=temp&date={d}&lo=5&hi=5"), 400, "bad_range"),
        (&full, format!("/v1/grid?var=temp&date={d}&palette=viridis"), 400, "bad_palette"),
        (&full, "/v1/grid?var=temp&date=2100-03-01".into(), 404, "no_data"),
        (&empty, format!("/v1/grid?var=temp&date={d}"), 503, "store_empty"),
        (&full, "/v1/clusters?k=5".into(), 200, ""),
        (&full, "/v1/clusters?k=50".into(), 400, "bad_k"),
        (&empty, "/v1/clusters?k=5".into(), 503, "store_empty"),
        (&full, "/v2/forecast".into(), 404, "not_found"),
    ];
    let posts = [
        (r#"{"user":"ben","location":"L1"}"#, 204, ""),
        (r#"{"user":"ana","location":"L9"}"#, 404, "unknown_location"),
        (r#"{"user":"ana","location":"L0","weight":0}"#, 400, "bad_weight"),
        (r#"not json"#, 400, "bad_request"),
    ];
    block_on(async {
        for (state, uri, status, code) in &gets {
            let r = get(&app(state), uri).await;
            ensure!(r.status == *status, "{uri}: status {} body {}", r.status, String::from_utf8_lossy(&r.body));
            ensure!(r.version == Some(state.snapshot().version()), "{uri}: version header {:?}", r.version);
            if !code.is_empty() {
                ensure!(r.error_code() == *code, "{uri}: error {}", r.error_code());
                ensure!(r.json()["message"].is_string(), "{uri}: no message");
            }
        }
        for (body, status, code) in posts {
            let r = post(&app(&full), "/v1/interactions", body).await;
            ensure!(r.status == status, "POST {body}: status {}", r.status);
            if !code.is_empty() {
                ensure!(r.error_code() == code, "POST {body}: error {}", r.error_code());
            }
        }
        Ok(())
    })?;
    Ok(gets.len() + posts.len())
}

fn service_concurrency() -> Result<usize, String> {
    let d = date_param(DEPART);
    let requests: Vec<String> = vec![
        "/healthz".into(),
        format!("/v1/forecast?lat=-0.3&lon=0.5&date={d}&var=temperature"),
        "/v1/forecast?lat=0&lon=1&date=2100-07-01&var=temp".into(),
        format!("/v1/forecast?lat=91&lon=0&date={d}&var=temp"),
        format!("/v1/route?from_lat=0&from_lon=0&to_lat=0&to_lon=2&depart={d}"),
        format!("/v1/route?from_lat=0&from_lon=0&to_lat=5&to_lon=10.5&depart={d}"),
        format!("/v1/recommendations?user=ana&lambda=0.4&date={d}"),
        format!("/v1/grid?var=rain&date={d}&format=ppm&scale=3"),
        format!("/v1/grid?var=temp&date={d}"),
        "/v1/clusters?k=3".into(),
    ];
    let state = fixture_state();
    state.record_interaction("ana", "L0", 2.0).map_err(|e| e.to_string())?;
    state.record_interaction("ben", "L2", 1.0).map_err(|e| e.to_string())?;
    let before = digests(&state);
    let addr = spawn_server(state.clone());
    let serial: Vec<Reply> = requests.iter().map(|r| http_get(addr, r)).collect();
    let threads = 32;
    let barrier = Arc::new(Barrier::new(threads));
    let handles: Vec<_> = (0..threads)
        .map(|t| {
            let (barrier, requests) = (barrier.clone(), requests.clone());
            std::thread::spawn(move || {
                barrier.wait();
                (0..requests.len())
                    .map(|i| {
                        let idx = (i + t) % requests.len();
                        (idx, http_get(addr, &requests[idx]))
                    })
                    .collect::<Vec<_>>()
            })
        })
        .collect();
    let mut compared = 0;
    for h in handles {
        for (idx, reply) in h.join().map_err(|_| "client thread panicked")? {
            ensure!(reply == serial[idx], "{} differs under load", requests[idx]);
            compared += 1;
        }
    }
    ensure!(digests(&state) == before, "GETs changed the store or matrix");
    Ok(compared)
}

fn service_provider() -> Result<usize, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for (i, name) in ["c.json", "a.json", "b.json"].iter().enumerate() {
        let body = format!(
            r#"{{"source":"{name}","observations":[{{"location":{{"lat":-0.3,"lon":0.5}},"variable":"temp","date":"2011-03-0{}","value":{i}}}]}}"#,
            i + 3
        );
        std::fs::write(dir.path().join(name), body).map_err(|e| e.to_string())?;
    }
    std::fs::write(dir.path().join("d.json"), "{ truncated").map_err(|e| e.to_string())?;
    let store = SharedStore::new(fixture_snapshot());
    let mut p = ReplayProvider::new(dir.path()).map_err(|e| e.to_string())?;
    let today = NaiveDate::from_ymd_opt(2011, 3, 10).unwrap();
    let mut versions = vec![store.load().version()];
    for _ in 0..5 {
        poll_provider(&mut p, &store, None, today);
        versions.push(store.load().version());
    }
    ensure!(versions.windows(2).all(|w| w[1] >= w[0]), "versions went backwards: {versions:?}");
    ensure!(versions == [1, 2, 3, 4, 4, 4], "versions {versions:?}");
    let sources: Vec<String> = store.load().provenance().iter().map(|p| p.source.clone()).collect();
    ensure!(sources[1..] == ["a.json", "b.json", "c.json"], "order {sources:?}");
    Ok(versions.len() - 1)
}

fn service_side_effects() -> Result<usize, String> {
    let state = fixture_state();
    state.record_interaction("ana", "L0", 2.0).map_err(|e| e.to_string())?;
    let before = digests(&state);
    let d = date_param(DEPART);
    let uris = [
        "/healthz".to_string(),
        format!("/v1/forecast?lat=-0.3&lon=0.5&date={d}&var=temp"),
        format!("/v1/route?from_lat=0&from_lon=0&to_lat=0&to_lon=2&depart={d}"),
        format!("/v1/recommendations?user=ana&date={d}"),
        format!("/v1/grid?var=temp&date={d}&format=ppm"),
        "/v1/clusters?k=4".into(),
        "/v1/forecast?lat=95&lon=0&date=x&var=temp".into(),
    ];
    block_on(async {
        for uri in &uris {
            get(&app(&state), uri).await;
        }
    });
    ensure!(digests(&state) == before, "a GET changed the store or matrix");
    block_on(async { post(&app(&state), "/v1/interactions", r#"{"user":"ana","location":"L1"}"#).await });
    let after = digests(&state);
    ensure!(after.0 == before.0 && after.1 == before.1, "POST touched the store");
    ensure!(after.2 != before.2, "POST left the matrix unchanged");
    Ok(uris.len())
}

fn service() -> Check {
    let contracts = service_contracts()?;
    let compared = service_concurrency()?;
    let polls = service_provider()?;
    let gets = service_side_effects()?;
    Ok(format!(
        "{contracts} contract cases, {compared} concurrent replies match serial, {polls} polls monotone, {gets} GETs side-effect free"
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("netcdf round trip", netcdf_round_trip),
        ("persistence identity", persistence_identity),
        ("trend fit", trend_fit),
        ("k-means", kmeans),
        ("collaborative filter", collaborative_filter),
        ("router", router),
        ("render", render),
        ("service", service),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name}: {detail} ({secs:.2}s)"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} ({secs:.2}s)");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
