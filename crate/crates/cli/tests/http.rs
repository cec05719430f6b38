use std::path::PathBuf;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use xcosw_cli::service::{router, ServiceConfig};
use xcosw_core::{interchange::to_interchange_value, parse_xcos_xml, Diagram};

fn model_text(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../models")
        .join(name);
    std::fs::read_to_string(path).unwrap()
}

fn app() -> Router {
    router(ServiceConfig::default())
}

async fn call(app: Router, method: &str, uri: &str, body: impl Into<Body>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.into())
        .unwrap();
    let res = app.oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let v = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, v)
}

async fn post(app: Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, "POST", uri, body.to_string()).await
}

#[tokio::test]
async fn simulate_dc_motor() {
    let (status, v) = post(
        app(),
        "/api/simulate",
        json!({ "diagram": model_text("dc_motor.xml") }),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["status"], "ok");
    let signals = v["result"]["signals"].as_array().unwrap();
    assert_eq!(signals.len(), 1);
    assert_eq!(signals[0]["probe"], "speed");
    assert_eq!(
        signals[0]["values"].as_array().unwrap().len(),
        v["result"]["times"].as_array().unwrap().len()
    );
    assert!(v["timing"]["wall_ms"].as_f64().unwrap() >= 0.0);
}

#[tokio::test]
async fn simulate_interchange_object_with_overrides() {
    let d = parse_xcos_xml(model_text("lag.xml").as_bytes()).unwrap();
    let (status, v) = post(
        app(),
        "/api/simulate",
        json!({ "diagram": to_interchange_value(&d), "options": { "tf": 1.5, "solver": "adaptive" } }),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["result"]["metadata"]["solver"], "adaptive");
    assert_eq!(
        *v["result"]["times"].as_array().unwrap().last().unwrap(),
        1.5
    );
}

#[tokio::test]
async fn unset_gain_is_422() {
    let (status, v) = post(
        app(),
        "/api/simulate",
        json!({ "diagram": model_text("dc_motor_unset.xml") }),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["status"], "invalid");
    assert!(v.get("result").is_none());
    let codes: Vec<&str> = v["diagnostics"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d["code"].as_str().unwrap())
        .collect();
    assert_eq!(codes.iter().filter(|c| **c == "UNSET_PARAM").count(), 2);
}

#[tokio::test]
async fn malformed_bodies_are_400() {
    for body in [
        "{}",
        "not json",
        "[1,2]",
        r#"{"diagram": 5}"#,
        r#"{"diagram": "<oops"}"#,
    ] {
        let (status, v) = call(app(), "POST", "/api/simulate", body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert_eq!(v["status"], "error");
        assert!(v["code"].is_string() && v["message"].is_string());
    }
    let (status, _) = post(
        app(),
        "/api/simulate",
        json!({ "diagram": model_text("lag.xml"), "options": { "dt": -1 } }),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(app(), "POST", "/api/validate", "{").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn blocks_route() {
    let (status, v) = call(app(), "GET", "/api/blocks", Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    let step = v
        .as_array()
        .unwrap()
        .iter()
        .find(|b| b["kind"] == "STEP_FUNCTION")
        .unwrap();
    assert_eq!(step["n_out"], 1);
    assert_eq!(step["params"][0]["name"], "step_time");
    assert_eq!(step["params"][0]["default"], "1");
}

#[tokio::test]
async fn validate_route() {
    let empty = to_interchange_value(&Diagram::default());
    let (status, v) = post(app(), "/api/validate", json!({ "diagram": empty })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v, json!([]));

    let (status, v) = post(
        app(),
        "/api/validate",
        json!({ "diagram": model_text("gain_loop.xml") }),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let loops: Vec<&Value> = v
        .as_array()
        .unwrap()
        .iter()
        .filter(|d| d["code"] == "ALGEBRAIC_LOOP")
        .collect();
    assert_eq!(loops.len(), 1);
    assert_eq!(loops[0]["blocks"], json!(["3", "4"]));
}

#[tokio::test]
async fn convert_route() {
    let (status, v) = post(
        app(),
        "/api/convert",
        json!({ "diagram": model_text("mavxcos.xml"), "to": "json" }),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["diagram"]["title"], "MavXcos");
    let (status, v) = post(
        app(),
        "/api/convert",
        json!({ "diagram": v["diagram"], "to": "xml" }),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let d = parse_xcos_xml(v["content"].as_str().unwrap().as_bytes()).unwrap();
    assert_eq!(d.blocks()[0].kind.name(), "STEP_FUNCTION");
}

#[tokio::test]
async fn identical_requests_identical_results() {
    let body = json!({ "diagram": model_text("dc_motor.xml"), "options": { "tf": 2 } });
    let (_, a) = post(app(), "/api/simulate", body.clone()).await;
    let (_, b) = post(app(), "/api/simulate", body).await;
    assert_eq!(a["result"], b["result"]);
    assert!(a["result"].is_object());
}

#[tokio::test]
async fn budget_exhaustion_is_408() {
    let app = router(ServiceConfig {
        budget: Duration::ZERO,
        ..ServiceConfig::default()
    });
    let (status, v) = post(
        app,
        "/api/simulate",
        json!({ "diagram": model_text("lag.xml"), "options": { "tf": 100, "dt": 1e-4 } }),
    )
    .await;
    assert_eq!(status, StatusCode::REQUEST_TIMEOUT);
    assert_eq!(v["status"], "error");
    assert_eq!(v["code"], "DEADLINE_EXCEEDED");
}

#[tokio::test]
async fn runtime_failure_is_reported() {
    let mut d = Diagram::default();
    let c = d.add_block("CONST_m", vec![], (0.0, 0.0)).unwrap();
    let s = d
        .add_block(
            "SUMMATION",
            vec![("signs".into(), "[+1;+1]".into())],
            (0.0, 0.0),
        )
        .unwrap();
    let g = d
        .add_block("GAINBLK", vec![("gain".into(), "1e300".into())], (0.0, 0.0))
        .unwrap();
    let i = d.add_block("INTEGRAL_f", vec![], (0.0, 0.0)).unwrap();
    let sc = d.add_block("CSCOPE", vec![], (0.0, 0.0)).unwrap();
    use xcosw_core::Endpoint as E;
    d.connect(E::new(&c, 0), E::new(&s, 0)).unwrap();
    d.connect(E::new(&g, 0), E::new(&s, 1)).unwrap();
    d.connect(E::new(&s, 0), E::new(&i, 0)).unwrap();
    d.connect(E::new(&i, 0), E::new(&g, 0)).unwrap();
    d.connect(E::new(&i, 0), E::new(&sc, 0)).unwrap();
    let (status, v) = post(
        app(),
        "/api/simulate",
        json!({ "diagram": to_interchange_value(&d), "options": { "tf": 1 } }),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["status"], "error");
    assert_eq!(v["code"], "SIMULATION_FAILED");
}

#[tokio::test]
async fn static_bundle_served_at_root() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>editor</html>").unwrap();
    let app = router(ServiceConfig {
        static_dir: Some(dir.path().to_path_buf()),
        ..ServiceConfig::default()
    });
    let req = Request::builder().uri("/").body(Body::empty()).unwrap();
    let res = app.oneshot(req).await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&bytes[..], b"<html>editor</html>");
}
