mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use common::*;
use traffic_xai::dataset::{read_csv_file, synthetic};
use traffic_xai::forest::{save_file, SplitSpec};
use traffic_xai::service::{http, ExplainService, ServiceConfig};

struct Setup {
    _dir: tempfile::TempDir,
    service: Arc<ExplainService>,
    config: ServiceConfig,
}

fn setup() -> Setup {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("UTD19.csv");
    let model = dir.path().join("pretrained_model");
    let mut d = synthetic(250, 8);
    // Same readings under a second detector, so inference rows can share a
    // cache entry.
    for i in 0..20 {
        let mut twin = d.records[i].clone();
        twin.detid = format!("TWIN.D{i:03}");
        d.records.push(twin);
    }
    write_dataset(&d, &data);

    let reread = read_csv_file(&data).unwrap();
    let (tr, _) = traffic_xai::dataset::split(&reread, 0.5, 3).unwrap();
    let x = traffic_xai::dataset::feature_matrix(&tr);
    let cfg = traffic_xai::forest::ForestConfig { n_trees: 15, ..Default::default() };
    let mut forest = traffic_xai::forest::train(&x, &tr.flows(), &cfg).unwrap();
    forest.split = Some(SplitSpec { train_fraction: 0.5, seed: 3 });
    save_file(&forest, &model).unwrap();

    let config = ServiceConfig::new(&model, &data);
    let service = Arc::new(ExplainService::open(config.clone()));
    Setup { _dir: dir, service, config }
}

async fn call(app: &Router, method: &str, uri: &str) -> (StatusCode, String) {
    let req = Request::builder().method(method).uri(uri).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn json(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

/// Inference row ids whose features coincide, if any.
fn twin_rows(rows: &[Value]) -> Option<(usize, usize)> {
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            if a["speed"] == b["speed"] && a["occupancy"] == b["occupancy"] && a["detector"] != b["detector"] {
                return Some((a["row_id"].as_u64()? as usize, b["row_id"].as_u64()? as usize));
            }
        }
    }
    None
}

#[tokio::test]
async fn health_and_scenario() {
    let s = setup();
    let app = http::router(Arc::clone(&s.service), None);
    let (status, body) = call(&app, "GET", "/api/health").await;
    assert_eq!(status, StatusCode::OK);
    let h = json(&body);
    assert_eq!(h["ready"], true);
    assert_eq!(h["model_loaded"], true);
    assert_eq!(h["cache"]["hits"], 0);
    assert_eq!(h["cache"]["misses"], 0);

    let (status, first) = call(&app, "GET", "/api/scenario").await;
    assert_eq!(status, StatusCode::OK);
    let (_, second) = call(&app, "GET", "/api/scenario").await;
    assert_eq!(first, second);
    let sc = json(&first);
    assert_eq!(sc["reasoning"], "Deductive Reasoning");
    assert_eq!(sc["persona_name"], "Caroline");
}

#[tokio::test]
async fn predictions_have_the_table_fields() {
    let s = setup();
    let app = http::router(Arc::clone(&s.service), None);
    let (status, body) = call(&app, "GET", "/api/predictions").await;
    assert_eq!(status, StatusCode::OK);
    let rows = json(&body);
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 135);
    let ctx = s.service.context().unwrap();
    for (i, row) in rows.iter().enumerate() {
        let keys: Vec<&String> = row.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 6);
        for k in ["row_id", "pred_flow", "city", "detector", "speed", "occupancy"] {
            assert!(row.get(k).is_some(), "{k}");
        }
        assert_eq!(row["row_id"], i);
        let direct = ctx.forest.predict(&ctx.inference.records[i].features());
        assert_eq!(row["pred_flow"].as_f64().unwrap(), direct);
    }
}

#[tokio::test]
async fn explanation_cache_and_method_validation() {
    let s = setup();
    let app = http::router(Arc::clone(&s.service), None);
    for m in ["lime-simplified", "lime-detailed", "shap-simplified", "shap-detailed"] {
        let (status, body) = call(&app, "GET", &format!("/api/explanations/2?method={m}")).await;
        assert_eq!(status, StatusCode::OK, "{m}: {body}");
        assert_eq!(json(&body)["method"], m);
    }
    let h = s.service.health();
    assert_eq!((h.cache.hits, h.cache.misses), (0, 4));

    let (_, a) = call(&app, "GET", "/api/explanations/5?method=shap-detailed").await;
    let (_, b) = call(&app, "GET", "/api/explanations/5?method=shap-detailed").await;
    assert_eq!(a, b);
    let h = s.service.health();
    assert_eq!((h.cache.hits, h.cache.misses), (1, 5));

    for bad in ["gradcam", "SHAP-DETAILED", "", "lime"] {
        let (status, body) = call(&app, "GET", &format!("/api/explanations/0?method={bad}")).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
        let e = json(&body);
        assert_eq!(e["error"], "unknown_method");
        assert!(e["detail"].as_str().unwrap().contains("shap-detailed"));
    }
    let (status, _) = call(&app, "GET", "/api/explanations/0").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, body) = call(&app, "GET", "/api/explanations/9999?method=lime-simplified").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(json(&body)["error"], "row_not_found");
    let (status, _) = call(&app, "GET", "/api/explanations/abc?method=lime-simplified").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, body) = call(&app, "GET", "/api/unknown").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(json(&body).get("error").is_some());
}

#[tokio::test]
async fn duplicate_features_share_a_cache_entry() {
    let s = setup();
    let app = http::router(Arc::clone(&s.service), None);
    let (_, body) = call(&app, "GET", "/api/predictions").await;
    let rows = json(&body);
    let (i, j) = twin_rows(rows.as_array().unwrap()).expect("fixture places both twins in the inference split");
    let (_, a) = call(&app, "GET", &format!("/api/explanations/{i}?method=lime-detailed")).await;
    let (_, b) = call(&app, "GET", &format!("/api/explanations/{j}?method=lime-detailed")).await;
    assert_eq!(a, b);
    assert_eq!(s.service.health().cache.misses, 1);
    assert_eq!(s.service.health().cache.hits, 1);
}

#[tokio::test]
async fn not_ready_until_model_exists() {
    let s = setup();
    let missing = ServiceConfig::new(s.config.model_path.with_file_name("absent"), &s.config.data_path);
    let svc = Arc::new(ExplainService::open(missing));
    let app = http::router(Arc::clone(&svc), None);
    let (status, body) = call(&app, "GET", "/api/health").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json(&body)["ready"], false);
    let (status, body) = call(&app, "GET", "/api/predictions").await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(json(&body)["error"], "service_not_ready");
    let (status, _) = call(&app, "POST", "/api/refresh").await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);

    std::fs::copy(&s.config.model_path, s.config.model_path.with_file_name("absent")).unwrap();
    let (status, body) = call(&app, "POST", "/api/refresh").await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(json(&body)["ready"], true);
}

#[tokio::test]
async fn static_ui_is_served_at_root() {
    let s = setup();
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<!doctype html><title>ui</title>").unwrap();
    let app = http::router(Arc::clone(&s.service), Some(ui.path().to_path_buf()));
    let (status, body) = call(&app, "GET", "/").await;
    assert_eq!(status, StatusCode::OK);
    assert!(body.contains("<title>ui</title>"));
    let (status, _) = call(&app, "GET", "/api/health").await;
    assert_eq!(status, StatusCode::OK);
}
