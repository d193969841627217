use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use flowshop_service::{app, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(
    router: &Router,
    method: Method,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, String) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(v.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = router.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn call_json(
    router: &Router,
    method: Method,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let (status, text) = call(router, method, uri, body).await;
    (status, serde_json::from_str(&text).unwrap_or(Value::Null))
}

async fn wait_terminal(router: &Router, run_id: &str) -> Value {
    for _ in 0..2000 {
        let (_, rec) = call_json(router, Method::GET, &format!("/runs/{run_id}"), None).await;
        if matches!(
            rec["status"].as_str(),
            Some("done" | "cancelled" | "failed")
        ) {
            return rec;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("run {run_id} did not finish");
}

const TWO_JOB: &str = r#"{"id":"two","m":2,"n":2,"p":[[3,1],[1,3]],"buffers":[null],"seed":null}"#;

fn setup(workers: usize) -> (tempfile::TempDir, Router) {
    let dir = tempfile::tempdir().unwrap();
    let state = AppState::open(dir.path(), workers).unwrap();
    (dir, app(state))
}

#[tokio::test]
async fn health_reports_ok() {
    let (_dir, router) = setup(1);
    let (status, body) = call_json(&router, Method::GET, "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
}

#[tokio::test]
async fn uploaded_instance_round_trips_byte_for_byte() {
    let (_dir, router) = setup(1);
    let doc: Value = serde_json::from_str(TWO_JOB).unwrap();
    let (status, body) = call_json(&router, Method::POST, "/instances", Some(doc)).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = body["id"].as_str().unwrap().to_string();
    let (status, text) = call(&router, Method::GET, &format!("/instances/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(text, TWO_JOB);

    let (_, list) = call_json(&router, Method::GET, "/instances", None).await;
    assert_eq!(list[0]["id"], id.as_str());
    assert_eq!(list[0]["n"], 2);
}

#[tokio::test]
async fn generated_instance_matches_shared_generator() {
    let (_dir, router) = setup(1);
    let params = json!({"n": 50, "m": 2, "lo": 1, "hi": 10, "seed": 7});
    let (status, body) = call_json(&router, Method::POST, "/instances", Some(params)).await;
    assert_eq!(status, StatusCode::CREATED);
    let (_, text) = call(
        &router,
        Method::GET,
        &format!("/instances/{}", body["id"].as_str().unwrap()),
        None,
    )
    .await;
    let expected = flowshop_core::bench::generate_instance(
        50,
        2,
        flowshop_core::bench::UniformTimes { lo: 1, hi: 10 },
        vec![flowshop_core::Capacity::Unbounded],
        7,
    )
    .unwrap();
    assert_eq!(text, expected.to_json());
}

#[tokio::test]
async fn negative_time_is_422_naming_the_cell() {
    let (_dir, router) = setup(1);
    let doc = json!({"id":"bad","m":2,"n":2,"p":[[1,2],[3,-4]],"buffers":[null],"seed":null});
    let (status, body) = call_json(&router, Method::POST, "/instances", Some(doc)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "validation_error");
    assert_eq!(body["detail"]["field"], "p[1][1]");
    assert!(body["message"].as_str().unwrap().contains("-4"));
}

#[tokio::test]
async fn malformed_json_is_400() {
    let (_dir, router) = setup(1);
    let req = Request::builder()
        .method(Method::POST)
        .uri("/instances")
        .body(Body::from("{not json"))
        .unwrap();
    let resp = router.oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn evaluate_reports_blocking_and_permutation_errors() {
    let (_dir, router) = setup(1);
    let doc = json!({"id":"b0","m":2,"n":2,"p":[[1,5],[1,1]],"buffers":[0],"seed":null});
    let (_, body) = call_json(&router, Method::POST, "/instances", Some(doc)).await;
    let id = body["id"].as_str().unwrap();

    let (status, tl) = call_json(
        &router,
        Method::POST,
        "/evaluate",
        Some(json!({"instance_id": id, "sequence": [0, 1]})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(tl["makespan"], 7);
    assert_eq!(
        tl["blocking"],
        json!([{"job": 1, "machine": 0, "from": 2, "to": 6}])
    );

    let (status, err) = call_json(
        &router,
        Method::POST,
        "/evaluate",
        Some(json!({"instance_id": id, "sequence": [0, 0]})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["detail"]["field"], "sequence[1]");

    let (status, _) = call_json(
        &router,
        Method::POST,
        "/evaluate",
        Some(json!({"instance_id": "0000000000000000", "sequence": [0, 1]})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn unbounded_and_saturated_buffers_give_identical_timelines() {
    let (_dir, router) = setup(1);
    let params = json!({"n": 6, "m": 3, "seed": 3});
    let (_, body) = call_json(&router, Method::POST, "/instances", Some(params)).await;
    let id = body["id"].as_str().unwrap();
    let seq = json!([5, 1, 3, 0, 2, 4]);
    let (_, a) = call_json(
        &router,
        Method::POST,
        "/evaluate",
        Some(json!({"instance_id": id, "sequence": seq, "buffers": [null, null]})),
    )
    .await;
    let (_, b) = call_json(
        &router,
        Method::POST,
        "/evaluate",
        Some(json!({"instance_id": id, "sequence": seq, "buffers": [5, 5]})),
    )
    .await;
    for key in ["makespan", "operations", "blocking", "sequence"] {
        assert_eq!(a[key], b[key], "{key}");
    }
    assert_ne!(a["buffers"], b["buffers"]);
}

#[tokio::test]
async fn johnson_run_completes_with_result() {
    let (_dir, router) = setup(1);
    let doc: Value = serde_json::from_str(TWO_JOB).unwrap();
    let (_, body) = call_json(&router, Method::POST, "/instances", Some(doc)).await;
    let id = body["id"].as_str().unwrap();
    let (status, started) = call_json(
        &router,
        Method::POST,
        "/runs",
        Some(json!({"instance_id": id, "algorithm": "johnson"})),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let rec = wait_terminal(&router, started["run_id"].as_str().unwrap()).await;
    assert_eq!(rec["status"], "done");
    assert_eq!(rec["result"]["sequence"], json!([1, 0]));
    assert_eq!(rec["result"]["makespan"], 5);

    let (_, list) = call_json(&router, Method::GET, "/runs", None).await;
    assert_eq!(list.as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn run_requests_are_validated() {
    let (_dir, router) = setup(1);
    let (_, body) = call_json(
        &router,
        Method::POST,
        "/instances",
        Some(json!({"n": 4, "m": 3})),
    )
    .await;
    let id = body["id"].as_str().unwrap();
    let cases = [
        (
            json!({"instance_id": "ffffffffffffffff", "algorithm": "sa"}),
            StatusCode::NOT_FOUND,
        ),
        (
            json!({"instance_id": id, "algorithm": "tabu"}),
            StatusCode::UNPROCESSABLE_ENTITY,
        ),
        (
            json!({"instance_id": id, "algorithm": "johnson"}),
            StatusCode::UNPROCESSABLE_ENTITY,
        ),
        (
            json!({"instance_id": id, "algorithm": "sa", "config": {"iterations": 0}}),
            StatusCode::UNPROCESSABLE_ENTITY,
        ),
        (
            json!({"instance_id": id, "algorithm": "sa", "config": {"bogus": 1}}),
            StatusCode::UNPROCESSABLE_ENTITY,
        ),
        (
            json!({"instance_id": id, "algorithm": "sa", "buffers": [1]}),
            StatusCode::UNPROCESSABLE_ENTITY,
        ),
    ];
    for (req, expected) in cases {
        let (status, err) = call_json(&router, Method::POST, "/runs", Some(req.clone())).await;
        assert_eq!(status, expected, "{req} -> {err}");
        assert!(err["code"].is_string());
    }
}

#[tokio::test]
async fn cancelled_run_keeps_best_so_far_and_progress_is_monotone() {
    let (_dir, router) = setup(1);
    let (_, body) = call_json(
        &router,
        Method::POST,
        "/instances",
        Some(json!({"n": 40, "m": 2, "seed": 11})),
    )
    .await;
    let id = body["id"].as_str().unwrap();
    let config = json!({"gbml": {"generations": 100000, "population_size": 20}});
    let (_, started) = call_json(
        &router,
        Method::POST,
        "/runs",
        Some(json!({"instance_id": id, "algorithm": "gbml", "buffers": [1], "config": config, "seed": 5})),
    )
    .await;
    let run_id = started["run_id"].as_str().unwrap().to_string();

    let mut last_counter = 0;
    let mut last_best = f64::INFINITY;
    let mut polls = 0;
    while polls < 5 {
        let (_, rec) = call_json(&router, Method::GET, &format!("/runs/{run_id}"), None).await;
        let counter = rec["progress"]["counter"].as_u64().unwrap();
        assert!(counter >= last_counter);
        if let Some(best) = rec["progress"]["best_objective"].as_f64() {
            assert!(best <= last_best);
            last_best = best;
        }
        if counter > last_counter {
            polls += 1;
        }
        last_counter = counter;
        tokio::time::sleep(Duration::from_millis(5)).await;
    }

    let (status, _) = call_json(&router, Method::DELETE, &format!("/runs/{run_id}"), None).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let rec = wait_terminal(&router, &run_id).await;
    assert_eq!(rec["status"], "cancelled");
    assert!(rec["result"].is_null());
    assert_eq!(
        rec["progress"]["best_sequence"].as_array().unwrap().len(),
        40
    );
    assert!(rec["progress"]["best_objective"].as_f64().unwrap() <= last_best);

    let (status, _) = call_json(&router, Method::DELETE, "/runs/rmissing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn restart_preserves_documents_and_fails_inflight_runs() {
    let dir = tempfile::tempdir().unwrap();
    let run_id;
    {
        let router = app(AppState::open(dir.path(), 1).unwrap());
        let doc: Value = serde_json::from_str(TWO_JOB).unwrap();
        let (_, body) = call_json(&router, Method::POST, "/instances", Some(doc)).await;
        let id = body["id"].as_str().unwrap();
        let (_, started) = call_json(
            &router,
            Method::POST,
            "/runs",
            Some(json!({"instance_id": id, "algorithm": "johnson"})),
        )
        .await;
        run_id = started["run_id"].as_str().unwrap().to_string();
        wait_terminal(&router, &run_id).await;
    }
    // Simulate a crash mid-run by rewriting a record as running.
    let path = dir.path().join("runs").join(format!("{run_id}.json"));
    let mut rec: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let finished = rec.clone();
    rec["id"] = json!("rcrashed");
    rec["status"] = json!("running");
    rec["result"] = Value::Null;
    std::fs::write(dir.path().join("runs/rcrashed.json"), rec.to_string()).unwrap();

    let router = app(AppState::open(dir.path(), 1).unwrap());
    let (_, list) = call_json(&router, Method::GET, "/instances", None).await;
    assert_eq!(list.as_array().unwrap().len(), 1);
    let (_, kept) = call_json(&router, Method::GET, &format!("/runs/{run_id}"), None).await;
    assert_eq!(kept, finished);
    let (_, crashed) = call_json(&router, Method::GET, "/runs/rcrashed", None).await;
    assert_eq!(crashed["status"], "failed");
    assert!(crashed["error"].as_str().unwrap().contains("restart"));
}
