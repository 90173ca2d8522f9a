use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;
use wsn_twin::telemetry::TelemetryStore;
use wsn_twin::{Scenario, Simulation};
use wsn_twin_cli::api;
use wsn_twin_cli::runner::{self, SimHandle};

struct Harness {
    app: Router,
    handle: SimHandle,
    thread: Option<std::thread::JoinHandle<runner::Finished>>,
}

impl Drop for Harness {
    fn drop(&mut self) {
        self.handle.shutdown();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// A finished paper-day run behind the router. `speedup` 0 keeps the clock still.
fn finished(static_dir: Option<std::path::PathBuf>) -> Harness {
    let scenario = Scenario::paper();
    let mut sim = Simulation::new(scenario.clone(), TelemetryStore::in_memory(scenario.clock)).unwrap();
    sim.run_to_end().unwrap();
    let (handle, thread) = runner::spawn(sim, 0.0, Duration::from_millis(10));
    Harness {
        app: api::router(handle.clone(), static_dir),
        handle,
        thread: Some(thread),
    }
}

async fn send(app: &Router, method: &str, uri: &str, body: &str) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn get_json(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, body) = send(app, "GET", uri, "").await;
    (s, serde_json::from_str(&body).unwrap_or(Value::Null))
}

#[tokio::test]
async fn history_validation() {
    let h = finished(None);
    assert_eq!(get_json(&h.app, "/api/readings").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get_json(&h.app, "/api/readings?node=node7").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get_json(&h.app, "/api/readings?node=node1&from=yesterday").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(
        get_json(&h.app, "/api/readings?node=node1&from=2020-07-09T13:00:00&to=2020-07-09T12:00:00").await.0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(get_json(&h.app, "/api/readings?node=node1&kind=smoke").await.0, StatusCode::BAD_REQUEST);

    let (s, rows) = get_json(&h.app, "/api/readings?node=node2").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(rows.as_array().unwrap().len(), 9);
    let (_, rows) =
        get_json(&h.app, "/api/readings?node=node2&from=2020-07-09T12:00:00&to=2020-07-09T13:00:00").await;
    assert_eq!(rows.as_array().unwrap().len(), 3);
    let (_, rows) = get_json(&h.app, "/api/readings?node=gateway&kind=uplink").await;
    assert_eq!(rows.as_array().unwrap().len(), 9);
}

#[tokio::test]
async fn reads_do_not_change_state() {
    let h = finished(None);
    let a = send(&h.app, "GET", "/api/readings/latest", "").await;
    let b = send(&h.app, "GET", "/api/readings?node=node3", "").await;
    let c = send(&h.app, "GET", "/api/summary", "").await;
    for _ in 0..3 {
        assert_eq!(send(&h.app, "GET", "/api/readings/latest", "").await, a);
        assert_eq!(send(&h.app, "GET", "/api/readings?node=node3", "").await, b);
        assert_eq!(send(&h.app, "GET", "/api/summary", "").await, c);
    }
}

#[tokio::test]
async fn motor_body_validation_and_interlock() {
    let h = finished(None);
    for bad in ["", "{}", r#"{"speed":256,"direction":"forward"}"#, r#"{"speed":1,"direction":"up"}"#] {
        assert_eq!(send(&h.app, "POST", "/api/motor", bad).await.0, StatusCode::BAD_REQUEST, "{bad}");
    }
    let cmd = r#"{"speed":90,"direction":"reverse"}"#;
    assert_eq!(send(&h.app, "POST", "/api/motor", cmd).await.0, StatusCode::CONFLICT);
    let (s, body) = send(&h.app, "POST", "/api/alarms/clear", "").await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["before"]["power_cutoff"], true);
    assert_eq!(v["after"]["power_cutoff"], false);
    let (s, body) = send(&h.app, "POST", "/api/motor", cmd).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let id = serde_json::from_str::<Value>(&body).unwrap()["id"].as_u64().unwrap();
    assert_eq!(get_json(&h.app, &format!("/api/commands/{id}")).await.0, StatusCode::OK);
    assert_eq!(get_json(&h.app, "/api/commands/999").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn rule_crud() {
    let h = finished(None);
    let (_, v) = get_json(&h.app, "/api/alarms").await;
    assert_eq!(v["rules"].as_array().unwrap().len(), 1);
    assert_eq!(v["events"].as_array().unwrap().len(), 1);

    let rule = r#"{"predicate":{"node":"node2","field":"adc","comparator":"lt","threshold":250,
                   "debounce":2},"actions":["sprinkler_on"]}"#;
    let (s, body) = send(&h.app, "PUT", "/api/alarms/dry", rule).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    let (_, v) = get_json(&h.app, "/api/alarms").await;
    assert_eq!(v["rules"].as_array().unwrap().len(), 2);

    let mismatch = r#"{"id":"other","predicate":{"node":"node2","field":"adc","comparator":"lt","threshold":1,"debounce":1},"actions":[]}"#;
    assert_eq!(send(&h.app, "PUT", "/api/alarms/dry", mismatch).await.0, StatusCode::BAD_REQUEST);
    let bad_field = r#"{"predicate":{"node":"node2","field":"lux","comparator":"lt","threshold":1,"debounce":1},"actions":[]}"#;
    assert_eq!(send(&h.app, "PUT", "/api/alarms/x", bad_field).await.0, StatusCode::BAD_REQUEST);

    assert_eq!(send(&h.app, "DELETE", "/api/alarms/dry", "").await.0, StatusCode::NO_CONTENT);
    assert_eq!(send(&h.app, "DELETE", "/api/alarms/dry", "").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn cloud_ingest() {
    let h = finished(None);
    let (_, before) = get_json(&h.app, "/api/uplinks").await;
    let base = before["cloud"].as_array().unwrap().len() as u64;
    assert_eq!(base, 9);
    let (s, id) = send(&h.app, "GET", "/update?api_key=WSNTWIN0000000000&field1=12&field2=300", "").await;
    assert_eq!((s, id), (StatusCode::OK, (base + 1).to_string()));
    let (_, id) = send(&h.app, "GET", "/update?api_key=WSNTWIN0000000000&field3=31", "").await;
    assert_eq!(id, (base + 2).to_string());
    let (s, id) = send(&h.app, "GET", "/update?api_key=WRONG&field1=1", "").await;
    assert_eq!((s, id.as_str()), (StatusCode::OK, "0"));
    let (_, rows) = get_json(&h.app, "/api/readings?node=cloud").await;
    assert_eq!(rows.as_array().unwrap().len() as u64, base + 2);
    assert_eq!(rows.as_array().unwrap().last().unwrap()["values"]["field3"], 31);
}

#[tokio::test]
async fn fresh_ingest_ids_start_at_one() {
    let scenario = Scenario::paper();
    let sim = Simulation::new(scenario.clone(), TelemetryStore::in_memory(scenario.clock)).unwrap();
    let (handle, thread) = runner::spawn(sim, 0.0, Duration::from_millis(10));
    let h = Harness {
        app: api::router(handle.clone(), None),
        handle,
        thread: Some(thread),
    };
    let key = "/update?api_key=WSNTWIN0000000000&field1=1";
    assert_eq!(send(&h.app, "GET", key, "").await.1, "1");
    assert_eq!(send(&h.app, "GET", key, "").await.1, "2");
    assert_eq!(send(&h.app, "GET", "/update?field1=1", "").await.1, "0");
}

#[tokio::test]
async fn static_files_are_served_beside_the_api() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>console</h1>").unwrap();
    let h = finished(Some(dir.path().to_path_buf()));
    let (s, body) = send(&h.app, "GET", "/index.html", "").await;
    assert_eq!((s, body.as_str()), (StatusCode::OK, "<h1>console</h1>"));
    assert_eq!(send(&h.app, "GET", "/", "").await.0, StatusCode::OK);
    assert_eq!(send(&h.app, "GET", "/missing.js", "").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get_json(&h.app, "/api/readings/latest").await.0, StatusCode::OK);
}

#[tokio::test]
async fn stopped_simulation_is_503() {
    let h = finished(None);
    h.handle.shutdown();
    tokio::time::sleep(Duration::from_millis(50)).await;
    let (s, _) = send(&h.app, "POST", "/api/motor", r#"{"speed":1,"direction":"forward"}"#).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
}
