use std::time::Duration;

use pharmachain_core::crypto::KeyPair;
use pharmachain_telemetry::gateway::{shared, Gateway, MemorySink, RuleSet, SharedGateway};
use pharmachain_telemetry::loadtest::{run_load_test_blocking, LoadTestError};
use pharmachain_telemetry::reading::READING_FIELDS;
use pharmachain_telemetry::{GatewayServer, SignedReading, TelemetryReading};

fn reading(sku: &str, ts: u64, temp: f64) -> TelemetryReading {
    TelemetryReading {
        timestamp: ts,
        lat: 43.65,
        lng: -79.38,
        sku: sku.into(),
        lot: "L1".into(),
        drug_name: "Amoxicillin".into(),
        temp,
        hum: 40.0,
    }
}

fn setup() -> (SharedGateway, KeyPair, GatewayServer) {
    let key = KeyPair::from_label("http-node");
    let mut gw = Gateway::new(RuleSet::default(), Box::new(MemorySink::default()));
    gw.register_node("n", key.public_key());
    let gw = shared(gw);
    let server = GatewayServer::start("127.0.0.1:0".parse().unwrap(), gw.clone()).unwrap();
    (gw, key, server)
}

fn push(gw: &SharedGateway, key: &KeyPair, r: TelemetryReading) {
    let m = SignedReading::sign(r, "n", key).to_json();
    gw.write().unwrap().consume(&m).unwrap();
}

fn get(url: &str) -> (u16, serde_json::Value) {
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    rt.block_on(async {
        let resp = reqwest::get(url).await.unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap_or(serde_json::Value::Null))
    })
}

#[test]
fn shipment_endpoint_serves_latest_with_exact_fields() {
    let (gw, key, server) = setup();
    push(&gw, &key, reading("SKU-1", 100, 23.5));
    push(&gw, &key, reading("SKU-1", 50, 30.0));
    let (status, body) = get(&format!("{}/shipments/SKU-1", server.url()));
    assert_eq!(status, 200);
    let obj = body.as_object().unwrap();
    let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    keys.sort();
    let mut expected = READING_FIELDS.to_vec();
    expected.sort();
    assert_eq!(keys, expected);
    assert_eq!(body["temp"], 23.5);
    assert_eq!(body["timestamp"], 100);

    assert_eq!(get(&format!("{}/shipments/NOPE", server.url())).0, 404);
    assert_eq!(get(&format!("{}/shipments/bad%20sku", server.url())).0, 400);
}

#[test]
fn audit_endpoint_filters_by_range() {
    let (gw, key, server) = setup();
    for (ts, t) in [(10, 24.0), (20, 25.0), (30, 26.0), (40, 27.0)] {
        push(&gw, &key, reading("SKU-A", ts, t));
    }
    let (status, rows) = get(&format!("{}/shipments/SKU-A/audit", server.url()));
    assert_eq!(status, 200);
    assert_eq!(rows.as_array().unwrap().len(), 2);
    let (_, rows) = get(&format!("{}/shipments/SKU-A/audit?from=35&to=50", server.url()));
    assert_eq!(rows.as_array().unwrap().len(), 1);
    assert_eq!(rows[0]["reading"]["temp"], 27.0);
    let (_, rows) = get(&format!("{}/shipments/OTHER/audit", server.url()));
    assert_eq!(rows, serde_json::json!([]));
    let (status, stats) = get(&format!("{}/stats", server.url()));
    assert_eq!(status, 200);
    assert_eq!(stats["auditRows"], 2);
}

#[test]
fn load_test_thousand_requests_in_two_seconds() {
    let (gw, key, server) = setup();
    push(&gw, &key, reading("SKU-L", 1, 22.0));
    let report = run_load_test_blocking(&server.url(), "SKU-L", 1000, Duration::from_secs(2)).unwrap();
    assert_eq!(report.requests, 1000);
    assert_eq!(report.failed, 0);
    assert_eq!(report.error_rate_pct, 0.0);
    assert!(report.p95_ms < 500.0, "p95 {}", report.p95_ms);
    assert!(report.min_ms <= report.avg_ms && report.avg_ms <= report.max_ms);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    report.write(&path).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    for k in ["requests", "durationSecs", "failed", "errorRatePct", "avgMs", "minMs", "maxMs", "throughputRps", "p95Ms"] {
        assert!(v.get(k).is_some(), "{k}");
    }
}

#[test]
fn load_test_reports_unavailable_target() {
    let addr = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let err = run_load_test_blocking(&format!("http://{addr}"), "X", 5, Duration::from_millis(10)).unwrap_err();
    assert!(matches!(err, LoadTestError::TargetUnavailable(_)));
}

#[test]
fn unknown_sku_fails_every_request() {
    let (_gw, _key, server) = setup();
    let report = run_load_test_blocking(&server.url(), "MISSING", 20, Duration::from_millis(100)).unwrap();
    assert_eq!(report.failed, 20);
    assert_eq!(report.error_rate_pct, 100.0);
}
