use std::io::{Read, Write};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::NaiveDate;
use gantryflow_core::synth::{generate, CorridorTraffic, GenConfig, VehicleShare};
use gantryflow_core::views::{best_departure, HourWindow, ViewFilter};
use gantryflow_core::{CorridorRegistry, DateRange, StatsCube};
use gantryflow_server::{router, AppState, JobRecord, JobRequest, JobStatus, Overrides, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn small_config() -> GenConfig {
    let mut rates = [2.0; 24];
    rates[10] = 30.0;
    GenConfig {
        seed: 5,
        dataset_id: "small".into(),
        dates: DateRange::new(
            NaiveDate::from_ymd_opt(2018, 9, 1).unwrap(),
            NaiveDate::from_ymd_opt(2018, 9, 7).unwrap(),
        )
        .unwrap(),
        corridors: ["NF01-N", "NF03-S"]
            .iter()
            .map(|id| CorridorTraffic {
                corridor: id.to_string(),
                hourly_rates: rates,
                weekday_scale: [1.0; 7],
                mean_minutes: std::array::from_fn(|h| 13.0 + h as f64 / 6.0),
                sigma: 0.2,
            })
            .collect(),
        vehicle_mix: vec![VehicleShare { code: 31, p: 0.8 }, VehicleShare { code: 42, p: 0.2 }],
        malformed_fraction: 0.0,
        incomplete_fraction: 0.0,
        through_fraction: 0.3,
        max_travel_seconds: 10_800,
        corridor_definitions: Vec::new(),
    }
}

struct Fixture {
    _root: tempfile::TempDir,
    data: std::path::PathBuf,
    results: std::path::PathBuf,
    truth: StatsCube,
}

fn fixture() -> Fixture {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    let results = root.path().join("results");
    let g = generate(&small_config(), &data.join("small")).unwrap();
    Fixture {
        data,
        results,
        truth: g.truth.cube,
        _root: root,
    }
}

fn app(f: &Fixture) -> (AppState, Router) {
    let mut config = ServiceConfig::new(&f.data, &f.results);
    config.workers = 2;
    let state = AppState::open(config).unwrap();
    (state.clone(), router(state))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(v.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn get_json(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, b) = call(app, "GET", uri, None).await;
    (s, serde_json::from_slice(&b).unwrap())
}

async fn submit(app: &Router, body: Value) -> String {
    let (status, bytes) = call(app, "POST", "/api/jobs", Some(body)).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{}", String::from_utf8_lossy(&bytes));
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    v["job_id"].as_str().unwrap().to_string()
}

async fn wait_done(app: &Router, id: &str) -> JobRecord {
    for _ in 0..600 {
        let (s, b) = call(app, "GET", &format!("/api/jobs/{id}"), None).await;
        assert_eq!(s, StatusCode::OK);
        let rec: JobRecord = serde_json::from_slice(&b).unwrap();
        if matches!(rec.state, JobStatus::Done | JobStatus::Failed) {
            return rec;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("job {id} did not finish");
}

fn request_body() -> Value {
    json!({
        "dataset": "small",
        "corridors": ["NF01-N", "NF03-S"],
        "date_range": {"from": "2018-09-01", "to": "2018-09-30"}
    })
}

#[tokio::test]
async fn corridors_listing() {
    let f = fixture();
    let (_, app) = app(&f);
    let (s, v) = get_json(&app, "/api/corridors").await;
    assert_eq!(s, StatusCode::OK);
    let list = v["corridors"].as_array().unwrap();
    assert_eq!(list.len(), 4);
    let nf01n = list.iter().find(|c| c["id"] == "NF01-N").unwrap();
    assert_eq!(nf01n["totals"]["distance_km"], 31.1);
    assert_eq!(nf01n["totals"]["fee_twd"], 54.0);
    assert_eq!(nf01n["start_interchange"], "Nanxun 南屯");
    assert_eq!(nf01n["end_interchange"], "sānyì 三義");
    let seg = nf01n["segments"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["gantry"] == "01F-157.2N")
        .unwrap();
    assert_eq!(seg["fee_twd"], 18.9);
}

#[tokio::test]
async fn configured_corridor_is_listed() {
    let f = fixture();
    let mut extra = CorridorRegistry::builtin().get("NF01-N").unwrap().clone();
    extra.id = "NF01-N-short".into();
    extra.end_gantry = extra.segments[2].gantry;
    let path = f.results.with_file_name("corridors.json");
    std::fs::write(&path, serde_json::to_string(&[extra]).unwrap()).unwrap();
    let mut config = ServiceConfig::new(&f.data, &f.results);
    config.corridors = CorridorRegistry::with_config_file(&path).unwrap();
    let app = router(AppState::open(config).unwrap());
    let (_, v) = get_json(&app, "/api/corridors").await;
    assert_eq!(v["corridors"].as_array().unwrap().len(), 5);
}

#[tokio::test]
async fn datasets_listing() {
    let f = fixture();
    let (_, app) = app(&f);
    let (s, v) = get_json(&app, "/api/datasets").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, json!({"datasets": [{"id": "small", "months": ["2018-09"], "files": 7}]}));
}

#[tokio::test]
async fn job_lifecycle_and_stable_views() {
    let f = fixture();
    let (_, app) = app(&f);
    let id = submit(&app, request_body()).await;

    let (s, first) = get_json(&app, &format!("/api/jobs/{id}")).await;
    assert_eq!(s, StatusCode::OK);
    assert!(["Pending", "Running", "Done"].contains(&first["state"].as_str().unwrap()));

    let rec = wait_done(&app, &id).await;
    assert_eq!(rec.state, JobStatus::Done, "{:?}", rec.reason);
    let states: Vec<_> = rec.transitions.iter().map(|t| t.state).collect();
    assert_eq!(states, [JobStatus::Pending, JobStatus::Running, JobStatus::Done]);
    let output = rec.result.unwrap();
    assert_eq!(output.transits, f.truth.total_count());
    assert!(output.dates <= 30);

    let stored = std::fs::read_to_string(f.results.join(&id).join("cube.json")).unwrap();
    let mut expected = f.truth.clone();
    expected.metadata.date_filter = DateRange::new(
        NaiveDate::from_ymd_opt(2018, 9, 1).unwrap(),
        NaiveDate::from_ymd_opt(2018, 9, 30).unwrap(),
    );
    assert_eq!(stored, expected.to_json());

    let uris = [
        format!("/api/jobs/{id}/views/hourly?corridor=NF01-N"),
        format!("/api/jobs/{id}/views/heatmap?corridor=NF03-S"),
        format!("/api/jobs/{id}/views/vehicle_types?corridor=NF03-S"),
        format!("/api/jobs/{id}/views/avg_time?corridor=NF01-N&min_samples=3"),
        format!("/api/jobs/{id}/views/best_departure?corridor=NF01-N&weekday=Mon&window=6-20"),
        format!("/api/jobs/{id}/views/hourly?corridor=NF01-N&vehicle_types=42"),
    ];
    let mut bodies = Vec::new();
    for uri in &uris {
        let (s, a) = call(&app, "GET", uri, None).await;
        assert_eq!(s, StatusCode::OK, "{uri}: {}", String::from_utf8_lossy(&a));
        let (_, b) = call(&app, "GET", uri, None).await;
        assert_eq!(a, b, "{uri}");
        bodies.push(a);
    }
    let hourly: Value = serde_json::from_slice(&bodies[0]).unwrap();
    assert_eq!(hourly["counts"].as_array().unwrap().len(), 24);
    let heat: Value = serde_json::from_slice(&bodies[1]).unwrap();
    assert_eq!(heat["values"].as_array().unwrap().len(), 7);
    assert_eq!(heat["rows"][6], "Sun");

    let best: Value = serde_json::from_slice(&bodies[4]).unwrap();
    let lib = best_departure(
        &expected,
        "NF01-N",
        chrono::Weekday::Mon,
        HourWindow::new(6, 20).unwrap(),
        5,
        &ViewFilter::default(),
    )
    .unwrap();
    assert_eq!(best["hour"], lib.hour);
    assert_eq!(best["minutes"], lib.minutes.as_f64());

    // A fresh process over the same results directory serves the same bytes.
    drop(app);
    let (_, app) = self::app(&f);
    for (uri, before) in uris.iter().zip(&bodies) {
        let (s, after) = call(&app, "GET", uri, None).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(&after, before, "{uri}");
    }
}

#[tokio::test]
async fn request_errors() {
    let f = fixture();
    let (state, app) = app(&f);

    let mut body = request_body();
    body["dataset"] = json!("missing");
    assert_eq!(call(&app, "POST", "/api/jobs", Some(body)).await.0, StatusCode::NOT_FOUND);

    let mut body = request_body();
    body["corridors"] = json!(["NF09-N"]);
    assert_eq!(call(&app, "POST", "/api/jobs", Some(body)).await.0, StatusCode::NOT_FOUND);

    let mut body = request_body();
    body["date_range"] = json!({"from": "2018-09-30", "to": "2018-09-01"});
    assert_eq!(call(&app, "POST", "/api/jobs", Some(body)).await.0, StatusCode::BAD_REQUEST);

    let mut body = request_body();
    body["corridors"] = json!([]);
    assert_eq!(call(&app, "POST", "/api/jobs", Some(body)).await.0, StatusCode::BAD_REQUEST);

    let mut body = request_body();
    body["overrides"] = json!({"workers": 0});
    assert_eq!(call(&app, "POST", "/api/jobs", Some(body)).await.0, StatusCode::BAD_REQUEST);

    let (s, _) = call(&app, "POST", "/api/jobs", Some(json!({"dataset": 3}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, v) = get_json(&app, "/api/jobs/nope").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(v["error"].as_str().unwrap().contains("nope"));
    assert_eq!(call(&app, "GET", "/api/jobs/nope/views/hourly", None).await.0, StatusCode::NOT_FOUND);

    // A job that has not started answers views with 409.
    let pending = JobRecord::new(JobRequest {
        dataset: "small".into(),
        corridors: vec!["NF01-N".into()],
        date_range: None,
        overrides: Overrides::default(),
    });
    let pid = pending.id.clone();
    state.store().insert(pending).unwrap();
    let (s, _) = call(&app, "GET", &format!("/api/jobs/{pid}/views/hourly"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let id = submit(&app, request_body()).await;
    assert_eq!(wait_done(&app, &id).await.state, JobStatus::Done);
    let view = |q: &str| format!("/api/jobs/{id}/views/{q}");
    assert_eq!(call(&app, "GET", &view("nosuch?corridor=NF01-N"), None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", &view("hourly?corridor=NF03-N"), None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", &view("hourly"), None).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(
        call(&app, "GET", &view("best_departure?corridor=NF01-N"), None).await.0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        call(&app, "GET", &view("best_departure?corridor=NF01-N&weekday=Mon&window=20-6"), None)
            .await
            .0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        call(&app, "GET", &view("hourly?corridor=NF01-N&min_samples=x"), None).await.0,
        StatusCode::BAD_REQUEST
    );
    let (s, v) = get_json(
        &app,
        &view("best_departure?corridor=NF01-N&weekday=Mon&min_samples=1000000"),
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(v["error"].as_str().unwrap().contains("samples"));
}

#[tokio::test]
async fn failed_jobs_report_their_reason() {
    let f = fixture();
    let (_, app) = app(&f);
    // Break the dataset after it has been listed.
    let first = std::fs::read_dir(f.data.join("small"))
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .find(|p| p.extension().is_some_and(|x| x == "csv"))
        .unwrap();
    std::fs::remove_file(first).unwrap();
    let id = submit(&app, request_body()).await;
    let rec = wait_done(&app, &id).await;
    assert_eq!(rec.state, JobStatus::Failed);
    assert!(rec.reason.unwrap().contains("not found"));
    let (s, _) = call(&app, "GET", &format!("/api/jobs/{id}/views/hourly?corridor=NF01-N"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn pending_jobs_resume_after_restart() {
    let f = fixture();
    let id = {
        let config = ServiceConfig::new(&f.data, &f.results);
        let (store, _) = gantryflow_server::JobStore::open(&config.results_dir).unwrap();
        let rec = JobRecord::new(serde_json::from_value(request_body()).unwrap());
        let id = rec.id.clone();
        store.insert(rec).unwrap();
        id
    };
    let (_, app) = app(&f);
    assert_eq!(wait_done(&app, &id).await.state, JobStatus::Done);
    let (_, v) = get_json(&app, "/api/jobs").await;
    assert_eq!(v["jobs"].as_array().unwrap().len(), 1);
}

fn raw_http(addr: std::net::SocketAddr, request: &str) -> String {
    let mut stream = std::net::TcpStream::connect(addr).unwrap();
    stream.write_all(request.as_bytes()).unwrap();
    let mut out = String::new();
    stream.read_to_string(&mut out).unwrap();
    out
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn speaks_http_1_1_over_tcp() {
    let f = fixture();
    let config = ServiceConfig::new(&f.data, &f.results);
    let state = AppState::open(config).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(gantryflow_server::serve(listener, state, async {
        let _ = stopped.await;
    }));

    let response = tokio::task::spawn_blocking(move || {
        raw_http(
            addr,
            "GET /api/health HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n",
        )
    })
    .await
    .unwrap();
    assert!(response.starts_with("HTTP/1.1 200 OK\r\n"), "{response}");
    assert!(response.to_ascii_lowercase().contains("content-type: application/json"));
    assert!(response.ends_with("{\"status\":\"ok\"}"));

    stop.send(()).unwrap();
    server.await.unwrap().unwrap();
}
