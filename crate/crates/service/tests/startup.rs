mod common;

use std::sync::Arc;

use common::*;
use skycast_core::store::save_snapshot;
use skycast_service::config::{ApiConfig, ConfigError};
use skycast_service::{AppState, StartupError};

#[tokio::test]
async fn state_loads_from_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::create_dir(root.join("snapshots")).unwrap();
    save_snapshot(&fixture_snapshot(), &root.join("snapshots")).unwrap();
    std::fs::write(root.join("roads.geojson"), GRAPH).unwrap();
    std::fs::write(root.join("locations.json"), serde_json::to_string(&locations()).unwrap()).unwrap();
    std::fs::write(
        root.join("matrix.jsonl"),
        r#"{"user":"ana","location":"L0","weight":2.0,"last_updated":"2011-03-01T00:00:00Z"}"#,
    )
    .unwrap();
    std::fs::write(
        root.join("config.json"),
        r#"{"listen":"127.0.0.1:0","data_dir":"snapshots","graph":"roads.geojson",
            "locations":"locations.json","matrix":"matrix.jsonl",
            "weights":{"alpha":1.0},"recommend":{"lambda":0.0,"n":2},"cluster_seed":7}"#,
    )
    .unwrap();

    let cfg = ApiConfig::from_file(&root.join("config.json")).unwrap();
    assert_eq!(cfg.data_dir, root.join("snapshots"));
    let state = Arc::new(AppState::from_config(&cfg).unwrap());
    assert_eq!(state.weights.alpha, 1.0);
    assert_eq!(state.weights.beta, 2.0);
    assert_eq!(state.matrix().weight("ana", "L0"), 2.0);
    let a = app(&state);

    let r = get(&a, "/healthz").await;
    assert_eq!(r.json()["snapshot_version"], 1);
    let r = get(&a, &format!("/v1/recommendations?user=ana&date={}", date_param(DEPART))).await;
    assert_eq!(r.json()["recommendations"].as_array().unwrap().len(), 2);
    let r = get(&a, "/v1/clusters?k=2").await;
    assert_eq!(r.json()["seed"], 7);
    let r = get(&a, &format!("/v1/route?from_lat=0&from_lon=0&to_lat=0&to_lon=2&depart={}", date_param(DEPART))).await;
    assert_eq!(r.json()["nodes"], serde_json::json!([0, 3, 2]));

    post(&a, "/v1/interactions", r#"{"user":"ana","location":"L1"}"#).await;
    let text = std::fs::read_to_string(root.join("matrix.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn startup_rejects_missing_paths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ApiConfig {
        data_dir: dir.path().join("nope"),
        ..Default::default()
    };
    assert!(matches!(
        AppState::from_config(&cfg),
        Err(StartupError::Config(ConfigError::MissingPath { .. }))
    ));
    let cfg = ApiConfig {
        data_dir: dir.path().to_path_buf(),
        matrix: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    assert!(matches!(AppState::from_config(&cfg), Err(StartupError::Config(ConfigError::Invalid(_)))));
}

#[tokio::test]
async fn empty_data_dir_starts_with_an_empty_store() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ApiConfig {
        data_dir: dir.path().to_path_buf(),
        ..Default::default()
    };
    let state = Arc::new(AppState::from_config(&cfg).unwrap());
    let r = get(&app(&state), "/healthz").await;
    assert_eq!((r.status, r.json()["snapshot_version"].as_u64()), (200, Some(0)));
}
