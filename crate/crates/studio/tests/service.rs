use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use chad::service::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Reply {
    status: StatusCode,
    content_type: Option<String>,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: impl Into<Body>) -> Reply {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.into())
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let content_type = res.headers().get("content-type").map(|v| v.to_str().unwrap().to_string());
    let body = to_bytes(res.into_body(), usize::MAX).await.unwrap().to_vec();
    Reply {
        status,
        content_type,
        body,
    }
}

async fn get(app: &Router, uri: &str) -> Reply {
    call(app, "GET", uri, Body::empty()).await
}

async fn post(app: &Router, uri: &str, body: &str) -> Reply {
    call(app, "POST", uri, body.to_string()).await
}

async fn wait_for(app: &Router, project: &str, job: &str) -> Value {
    let deadline = Instant::now() + Duration::from_secs(300);
    loop {
        let r = get(app, &format!("/projects/{project}/jobs/{job}")).await.json();
        if r["state"] == "done" || r["state"] == "failed" {
            return r;
        }
        assert!(Instant::now() < deadline, "job {job} did not finish: {r}");
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
}

fn states(record: &Value) -> Vec<String> {
    record["history"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["state"].as_str().unwrap().to_string())
        .collect()
}

async fn submit(app: &Router, project: &str, body: &str) -> Value {
    let r = post(app, &format!("/projects/{project}/jobs"), body).await;
    assert_eq!(r.status, StatusCode::ACCEPTED, "{}", String::from_utf8_lossy(&r.body));
    r.json()
}

async fn run(app: &Router, project: &str, body: &str) -> Value {
    let id = submit(app, project, body).await["id"].as_str().unwrap().to_string();
    let done = wait_for(app, project, &id).await;
    assert_eq!(done["state"], "done", "{done}");
    done
}

/// A project holding a 16px synthetic dataset.
async fn project_with_dataset(app: &Router) -> String {
    let r = post(
        app,
        "/projects",
        r#"{"name": "walk", "ingest": {"synthetic_frames": 24, "size": 16}}"#,
    )
    .await;
    assert_eq!(r.status, StatusCode::CREATED);
    let body = r.json();
    let id = body["project"]["id"].as_str().unwrap().to_string();
    let job = body["job"]["id"].as_str().unwrap().to_string();
    assert_eq!(wait_for(app, &id, &job).await["state"], "done");
    id
}

#[tokio::test]
async fn health_and_empty_listing() {
    let tmp = tempfile::tempdir().unwrap();
    let app = router(AppState::open(tmp.path()).unwrap());
    assert_eq!(get(&app, "/health").await.json()["status"], "ok");
    let r = get(&app, "/projects").await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json(), json!([]));
    assert_eq!(get(&app, "/projects/p9").await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn malformed_bodies_get_json_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let app = router(AppState::open(tmp.path()).unwrap());
    for body in ["{not json", r#"{"name": "a", "extra": 1}"#, "[]"] {
        let r = post(&app, "/projects", body).await;
        assert_eq!(r.status, StatusCode::BAD_REQUEST, "{body}");
        assert_eq!(r.content_type.as_deref(), Some("application/json"));
        let e = r.json();
        assert_eq!(e["error"], "format");
        assert!(!e["message"].as_str().unwrap().is_empty());
    }
    let r = post(&app, "/projects", r#"{"name": "  "}"#).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn jobs_need_their_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let app = router(AppState::open(tmp.path()).unwrap());
    let id = post(&app, "/projects", r#"{"name": "empty"}"#).await.json()["project"]["id"]
        .as_str()
        .unwrap()
        .to_string();
    let r = post(&app, &format!("/projects/{id}/jobs"), r#"{"kind": "train-manifold"}"#).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(get(&app, &format!("/projects/{id}/frames/0")).await.status, StatusCode::CONFLICT);
    let r = post(&app, &format!("/projects/{id}/jobs"), r#"{"kind": "paint"}"#).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn full_pipeline_over_http() {
    let tmp = tempfile::tempdir().unwrap();
    let app = router(AppState::open(tmp.path()).unwrap());
    let p = project_with_dataset(&app).await;

    let meta = get(&app, &format!("/projects/{p}")).await.json();
    assert_eq!(meta["dataset"]["frames"], 24);
    assert!(meta["model"].is_null());

    let thumb = get(&app, &format!("/projects/{p}/frames/3?size=500")).await;
    assert_eq!(thumb.status, StatusCode::OK);
    assert_eq!(thumb.content_type.as_deref(), Some("image/png"));
    let img = image::load_from_memory(&thumb.body).unwrap();
    assert!(img.width() <= 128 && img.height() <= 128);
    assert_eq!(get(&app, &format!("/projects/{p}/frames/99")).await.status, StatusCode::NOT_FOUND);

    // The configuration is echoed exactly as submitted, number spelling included.
    let config = r#"{"zdim": 4, "lr": 1.0e-5, "stage_epochs": 1, "decoder_width": 8}"#;
    let started = Instant::now();
    let queued = submit(&app, &p, &format!(r#"{{"kind": "train-manifold", "config": {config}}}"#)).await;
    assert!(
        started.elapsed() < Duration::from_millis(100),
        "submission blocked for {:?}",
        started.elapsed()
    );
    assert_eq!(queued["state"], "queued");
    let id = queued["id"].as_str().unwrap();
    let done = wait_for(&app, &p, id).await;
    assert_eq!(done["state"], "done", "{done}");
    assert_eq!(states(&done), ["queued", "running", "done"]);
    assert_eq!(done["progress"], 1.0);
    let echoed = get(&app, &format!("/projects/{p}/jobs/{id}")).await;
    let text = String::from_utf8(echoed.body).unwrap();
    assert!(text.contains(config), "{text}");

    run(
        &app,
        &p,
        r#"{"kind": "train-gan", "config": {"epochs_per_stage": 1, "base_width": 4, "max_width": 8, "batch": 8}}"#,
    )
    .await;
    assert_eq!(get(&app, &format!("/projects/{p}")).await.json()["model"]["generator"], true);

    let r = post(
        &app,
        &format!("/projects/{p}/jobs"),
        r#"{"kind": "interpolate", "config": {"keyframes": [{"index": 2}], "fps": 10}}"#,
    )
    .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json()["error"], "validation");
    let r = post(
        &app,
        &format!("/projects/{p}/jobs"),
        r#"{"kind": "interpolate", "config": {"keyframes": [{"index": 2, "transition": 1}, {"index": 240}], "fps": 10}}"#,
    )
    .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);

    // An uploaded image can serve as a keyframe.
    let upload = post(&app, &format!("/projects/{p}/uploads"), "").await;
    assert_eq!(upload.status, StatusCode::BAD_REQUEST);
    let png = tmp.path().join("projects/p1/dataset/frame_000010.png");
    let bytes = std::fs::read(&png).unwrap();
    let upload = call(&app, "POST", &format!("/projects/{p}/uploads"), bytes).await;
    assert_eq!(upload.status, StatusCode::OK);
    let path = upload.json()["path"].as_str().unwrap().to_string();

    let render = run(
        &app,
        &p,
        &format!(
            r#"{{"kind": "interpolate", "config": {{"keyframes": [{{"index": 2, "transition": 1}}, {{"image": "{path}"}}], "fps": 10}}}}"#
        ),
    )
    .await;
    assert_eq!(render["result"]["frames"], 10);
    assert_eq!(render["result"]["duration"], 1.0);
    let rid = render["id"].as_str().unwrap();
    for stage in ["gan", "final"] {
        let r = get(&app, &format!("/projects/{p}/render/{rid}/9?stage={stage}")).await;
        assert_eq!(r.status, StatusCode::OK, "{stage}");
        assert_eq!(r.content_type.as_deref(), Some("image/png"));
    }
    assert_eq!(
        get(&app, &format!("/projects/{p}/render/{rid}/10")).await.status,
        StatusCode::NOT_FOUND
    );

    let denoised = run(
        &app,
        &p,
        &format!(r#"{{"kind": "denoise", "config": {{"job": "{rid}", "blend": {{"k": 3}}}}}}"#),
    )
    .await;
    assert_eq!(denoised["result"]["export"]["frames"], 10);
    let did = denoised["id"].as_str().unwrap();
    assert_eq!(get(&app, &format!("/projects/{p}/render/{did}/0")).await.status, StatusCode::OK);

    let jobs = get(&app, &format!("/projects/{p}/jobs")).await.json();
    assert_eq!(jobs.as_array().unwrap().len(), 5);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn state_survives_a_restart() {
    let tmp = tempfile::tempdir().unwrap();
    let (p, job) = {
        let state: Arc<AppState> = AppState::open(tmp.path()).unwrap();
        let app = router(state);
        let p = project_with_dataset(&app).await;
        let job = get(&app, &format!("/projects/{p}/jobs")).await.json()[0].clone();
        (p, job)
    };
    let app = router(AppState::open(tmp.path()).unwrap());
    let meta = get(&app, &format!("/projects/{p}")).await.json();
    assert_eq!(meta["name"], "walk");
    assert_eq!(meta["dataset"]["frames"], 24);
    let id = job["id"].as_str().unwrap();
    assert_eq!(get(&app, &format!("/projects/{p}/jobs/{id}")).await.json(), job);
    // New identifiers continue after the restored ones.
    let q = post(&app, "/projects", r#"{"name": "second"}"#).await.json();
    assert_ne!(q["project"]["id"], p.as_str());
}

#[tokio::test]
async fn unfinished_jobs_fail_on_restart() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("projects/p1/jobs");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(
        tmp.path().join("projects/p1/project.json"),
        r#"{"id": "p1", "name": "x", "created": 0.0, "dataset": null, "model": null}"#,
    )
    .unwrap();
    std::fs::write(
        dir.join("j1.json"),
        r#"{"id": "j1", "project": "p1", "kind": "train-manifold", "config": {}, "state": "running", "progress": 0.4,
            "history": [{"state": "queued", "at": 1.0}, {"state": "running", "at": 2.0}], "error": null, "result": null}"#,
    )
    .unwrap();
    let app = router(AppState::open(tmp.path()).unwrap());
    let job = get(&app, "/projects/p1/jobs/j1").await.json();
    assert_eq!(job["state"], "failed");
    assert_eq!(states(&job), ["queued", "running", "failed"]);
    assert!(job["error"]["message"].as_str().unwrap().contains("stopped"));
}
