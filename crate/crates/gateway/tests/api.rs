use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use futures::StreamExt;
use http_body_util::BodyExt;
use nbitms::events::{EventHub, EventKind};
use nbitms::service::Service;
use nbitms::settings::load_config;
use nbitms_core::SystemClock;
use serde_json::{json, Value};
use tower::ServiceExt;

const FLEET: &str = r#"{"devices": [
  {"id": "r1", "sys_object_id": "1.3.6.1.4.1.9.1.1", "sys_descr": "router"},
  {"id": "r2", "sys_object_id": "1.3.6.1.4.1.77.1", "faults": [{"at_s": 1.5, "kind": "SET_VALUE", "oid": "1.3.6.1.2.1.2.2.1.8.1", "value": {"type": "Integer", "value": "2"}}]}
]}"#;

const CONFIG: &str = r#"{
  "fleet": "fleet.json",
  "icon_rules": "icons.tsv",
  "objects": [
    {"id": "r1", "kind": "HOST", "address": "sim://r1", "check_command": "snmp_probe!1.3.6.1.2.1.1.3.0", "check_interval_s": 1},
    {"id": "r2", "kind": "HOST", "address": "sim://r2", "parent_host": "r1", "check_command": "snmp_probe!1.3.6.1.2.1.1.3.0", "check_interval_s": 1},
    {"id": "r2/if1", "kind": "SERVICE", "parent_host": "r2", "address": "sim://r2",
     "check_command": "snmp_probe!1.3.6.1.2.1.2.2.1.8.1!1", "check_interval_s": 1, "retry_interval_s": 1, "max_check_attempts": 1}
  ]
}"#;

fn setup(dir: &Path) -> PathBuf {
    std::fs::write(dir.join("fleet.json"), FLEET).unwrap();
    std::fs::write(dir.join("icons.tsv"), "10\tOID_PREFIX\t1.3.6.1.4.1.9\tcisco\n").unwrap();
    let p = dir.join("nbitms.json");
    std::fs::write(&p, CONFIG).unwrap();
    p
}

fn start(dir: &Path) -> Arc<Service> {
    let cfg = load_config(&setup(dir)).unwrap();
    Arc::new(Service::start(&cfg, Arc::new(SystemClock), EventHub::new(256)).unwrap())
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn wait_for<F: Fn(&Value) -> bool>(app: &axum::Router, uri: &str, f: F) -> Value {
    for _ in 0..100 {
        let (_, v) = call(app, "GET", uri, None).await;
        if f(&v) {
            return v;
        }
        tokio::time::sleep(Duration::from_millis(100)).await;
    }
    panic!("condition on {uri} never held");
}

#[tokio::test(flavor = "multi_thread")]
async fn map_objects_and_icons() {
    let dir = tempfile::tempdir().unwrap();
    let svc = start(dir.path());
    let app = nbitms::api::router(svc.clone());
    let (st, map) = call(&app, "GET", "/api/v1/map", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(map["api_version"], "v1");
    let icon = |id: &str| map["nodes"].as_array().unwrap().iter().find(|n| n["host_id"] == id).unwrap()["icon"].clone();
    assert_eq!(icon("r1"), "cisco");
    assert_eq!(icon("r2"), "?");
    let (st, objs) = call(&app, "GET", "/api/v1/objects", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(objs["objects"].as_array().unwrap().len(), 3);
    let (st, _) = call(&app, "GET", "/api/v1/nope", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn alarm_lifecycle_and_ack() {
    let dir = tempfile::tempdir().unwrap();
    let svc = start(dir.path());
    let app = nbitms::api::router(svc.clone());
    let v = wait_for(&app, "/api/v1/alarms?state=OPEN", |v| !v["alarms"].as_array().unwrap().is_empty()).await;
    let alarm = &v["alarms"][0];
    assert_eq!(alarm["object_id"], "r2/if1");
    let id = alarm["alarm_id"].as_u64().unwrap();

    let (st, _) = call(&app, "GET", "/api/v1/alarms?state=weird", None).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, _) = call(&app, "POST", "/api/v1/alarms/9999/ack", Some(json!({"operator_id": "ops"}))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, body) = call(&app, "POST", &format!("/api/v1/alarms/{id}/ack"), Some(json!({"operator_id": "ops"}))).await;
    assert_eq!(st, StatusCode::OK, "{body}");
    assert_eq!(body["alarm"]["state"], "ACKNOWLEDGED");
    assert_eq!(body["alarm"]["ack_by"], "ops");
    wait_for(&app, "/api/v1/alarms?state=ACKNOWLEDGED", |v| v["alarms"].as_array().unwrap().len() == 1).await;
    let (_, map) = call(&app, "GET", "/api/v1/map", None).await;
    let r2 = map["nodes"].as_array().unwrap().iter().find(|n| n["host_id"] == "r2").unwrap().clone();
    assert_eq!(r2["alarmed"], true);
}

#[tokio::test(flavor = "multi_thread")]
async fn transaction_submit_and_poll() {
    let dir = tempfile::tempdir().unwrap();
    let svc = start(dir.path());
    let app = nbitms::api::router(svc.clone());
    let body = json!({"operator_id": "ops", "directives": [
        {"oid": "1.3.6.1.2.1.1.4.0", "intended_value": {"type": "OctetString", "value": "noc@example.net"}},
        {"oid": "1.3.6.1.2.1.1.6.0", "intended_value": {"type": "OctetString", "value": "lab"}}
    ]});
    let (st, v) = call(&app, "POST", "/api/v1/config/r1/transactions", Some(body.clone())).await;
    assert_eq!(st, StatusCode::ACCEPTED, "{v}");
    let txn = v["txn_id"].as_str().unwrap().to_string();
    let done = wait_for(&app, &format!("/api/v1/config/transactions/{txn}"), |v| v["status"] == "DONE").await;
    assert_eq!(done["transaction"]["phase"], "COMMITTED");

    let (st, _) = call(&app, "POST", "/api/v1/config/nope/transactions", Some(body)).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let ro = json!({"operator_id": "ops", "directives": [
        {"oid": "1.3.6.1.2.1.1.3.0", "intended_value": {"type": "TimeTicks", "value": "1"}},
        {"oid": "1.3.6.1.2.1.1.5.0", "intended_value": {"type": "Integer", "value": "1"}}
    ]});
    let (st, v) = call(&app, "POST", "/api/v1/config/r1/transactions", Some(ro)).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["details"].as_array().unwrap().len(), 2, "{v}");
    let (st, _) = call(&app, "POST", "/api/v1/config/r1/transactions", Some(json!({"directives": []}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, _) = call(&app, "GET", "/api/v1/config/transactions/T0", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);

    let log = nbitms::service::read_txn_log(&dir.path().join("state")).unwrap();
    let phases: Vec<String> = log.iter().map(|r| format!("{:?}", r.phase)).collect();
    assert_eq!(phases, ["Planned", "Applying", "Verifying", "Committed"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn event_stream_is_ordered_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let svc = start(dir.path());
    let app = nbitms::api::router(svc.clone());
    let req = Request::builder().uri("/api/v1/events").body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["content-type"], "application/x-ndjson");
    let mut stream = resp.into_body().into_data_stream();
    let mut buf = Vec::new();
    let mut envs: Vec<Value> = Vec::new();
    let deadline = tokio::time::Instant::now() + Duration::from_secs(10);
    while !envs.iter().any(|e| e["kind"] == "ALARM_OPENED") {
        let chunk = tokio::time::timeout_at(deadline, stream.next()).await.expect("alarm event in time").unwrap().unwrap();
        buf.extend_from_slice(&chunk);
        while let Some(nl) = buf.iter().position(|b| *b == b'\n') {
            let line: Vec<u8> = buf.drain(..=nl).collect();
            envs.push(serde_json::from_slice(&line).unwrap());
        }
    }
    let seqs: Vec<u64> = envs.iter().map(|e| e["seq"].as_u64().unwrap()).collect();
    assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1), "{seqs:?}");
    let opened = envs.iter().find(|e| e["kind"] == "ALARM_OPENED").unwrap();
    assert_eq!(opened["payload"]["object_id"], "r2/if1");
    assert_eq!(opened["payload"]["alarm"]["state"], "OPEN");

    // Reconnect after the first envelope: replay resumes at the second.
    let first = seqs[0];
    let mut sub = svc.hub.subscribe(Some(first));
    let replayed = sub.next().await.unwrap();
    assert_eq!(replayed.seq, first + 1);
    assert_ne!(replayed.kind, EventKind::Resync);
}
