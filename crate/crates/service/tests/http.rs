//! The HTTP API end to end, driven through the router without a socket.

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tablescope_core::{export_parse, parse_document_json, parse_semantics, HeuristicScorer, ScorerConfig};
use tablescope_service::{app, ServiceConfig};
use tower::ServiceExt;

const DOC: &str = r#"{"doc_id":"fx","source":"fixture","pages":[{"page_id":0,"width_px":100,"height_px":100,"blocks":[
  {"block_id":"t1","type":"Table","bbox":[0,0,10,10],"text":"Table 1 accuracy per model"},
  {"block_id":"a","type":"Text","bbox":[0,10,10,20],"text":"Table 1 shows accuracy"},
  {"block_id":"b","type":"Text","bbox":[0,20,10,30],"text":"training took two days"},
  {"block_id":"c","type":"List","bbox":[0,30,10,40],"text":"model accuracy baseline"}]}]}"#;

fn doc_value() -> Value {
    serde_json::from_str(DOC).unwrap()
}

struct Reply {
    status: StatusCode,
    bytes: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap()
    }

    fn error_code(&self) -> String {
        self.json()["error"].as_str().unwrap().to_string()
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>, annotator: Option<&str>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(a) = annotator {
        req = req.header("X-Annotator-Id", a);
    }
    let body = match body {
        Some(v) => Body::from(serde_json::to_vec(&v).unwrap()),
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec();
    Reply { status, bytes }
}

fn service() -> Router {
    app(ServiceConfig::default()).unwrap()
}

async fn new_project(app: &Router) -> String {
    let r = call(app, "POST", "/projects", Some(json!({"document": doc_value(), "annotators": ["ann1", "ann2"]})), None).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let v = r.json();
    assert_eq!(v["status"], "Open");
    assert_eq!(v["annotation_mode"], "text_only");
    v["project_id"].as_str().unwrap().to_string()
}

async fn put_label(app: &Router, p: &str, who: &str, s: &str, label: &str, rev: u64) -> Reply {
    let body = json!({"annotator_id": who, "table_id": "t1", "text_block_id": s, "label": label, "revision": rev});
    call(app, "POST", &format!("/projects/{p}/labels"), Some(body), Some(who)).await
}

#[tokio::test]
async fn annotation_workflow_over_http() {
    let app = service();
    let p = new_project(&app).await;

    let tasks = call(&app, "GET", &format!("/projects/{p}/tasks"), None, None).await.json();
    assert_eq!(tasks["tasks"].as_array().unwrap().len(), 1);
    assert_eq!(tasks["tasks"][0]["candidates"][0]["number_match"], true);
    assert!(tasks["tasks"][0]["page_image"].is_null());

    for (who, s, l) in [
        ("ann1", "a", "related"),
        ("ann1", "b", "unrelated"),
        ("ann1", "c", "unrelated"),
        ("ann2", "a", "related"),
        ("ann2", "b", "unrelated"),
        ("ann2", "c", "related"),
    ] {
        let r = put_label(&app, &p, who, s, l, 1).await;
        assert_eq!(r.status, StatusCode::OK);
        assert_eq!(r.json()["revision"], 1);
    }
    let stale = put_label(&app, &p, "ann1", "a", "unrelated", 1).await;
    assert_eq!(stale.status, StatusCode::CONFLICT);
    assert_eq!(stale.error_code(), "StaleRevision");
    assert!(stale.json()["detail"].as_str().unwrap().contains("current revision is 1"));

    let export = call(&app, "GET", &format!("/projects/{p}/export"), None, None).await;
    assert_eq!(export.status, StatusCode::CONFLICT);
    assert_eq!(export.error_code(), "NotFinalized");

    let conflicts = call(&app, "GET", &format!("/projects/{p}/conflicts"), None, None).await.json();
    assert_eq!(conflicts["conflicts"].as_array().unwrap().len(), 1);
    assert_eq!(conflicts["conflicts"][0]["text_block_id"], "c");
    assert_eq!(conflicts["conflicts"][0]["labels"], json!({"ann1": false, "ann2": true}));

    let fin = call(&app, "POST", &format!("/projects/{p}/finalize"), None, None).await;
    assert_eq!(fin.error_code(), "UnresolvedConflicts");

    let agree = call(
        &app,
        "POST",
        &format!("/projects/{p}/conflicts/resolve"),
        Some(json!({"table_id": "t1", "text_block_id": "a", "label": "related"})),
        None,
    )
    .await;
    assert_eq!(agree.error_code(), "NotInConflict");

    let res = call(
        &app,
        "POST",
        &format!("/projects/{p}/conflicts/resolve"),
        Some(json!({"table_id": "t1", "text_block_id": "c", "label": "related", "note": "baseline row"})),
        None,
    )
    .await;
    assert_eq!(res.status, StatusCode::OK);
    assert_eq!(res.json()["resolution"], true);

    let fin = call(&app, "POST", &format!("/projects/{p}/finalize"), Some(json!({})), None).await;
    assert_eq!(fin.status, StatusCode::OK);
    assert_eq!(fin.json()["status"], "Finalized");

    let closed = put_label(&app, &p, "ann1", "b", "related", 2).await;
    assert_eq!(closed.error_code(), "ProjectClosed");

    let e1 = call(&app, "GET", &format!("/projects/{p}/export"), None, None).await;
    let e2 = call(&app, "GET", &format!("/projects/{p}/export"), None, None).await;
    assert_eq!(e1.status, StatusCode::OK);
    assert_eq!(e1.bytes, e2.bytes);
    assert_eq!(
        String::from_utf8(e1.bytes).unwrap(),
        "{\"annotator_id\":\"consensus\",\"doc_id\":\"fx\",\"page_id\":0,\"related_paragraphs\":[\"a\",\"c\"],\"table_id\":\"t1\"}\n"
    );
}

#[tokio::test]
async fn request_errors_have_code_and_detail() {
    let app = service();
    let r = call(&app, "POST", "/projects", Some(json!({"document": doc_value(), "annotators": ["solo"]})), None).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.error_code(), "TooFewAnnotators");
    assert!(r.json()["detail"].is_string());
    assert!(r.bytes.ends_with(b"}\n"));

    let mut bad = doc_value();
    bad["pages"][0]["blocks"][0]["bbox"] = json!([0, 0, 500, 10]);
    let r = call(&app, "POST", "/projects", Some(json!({"document": bad, "annotators": ["x", "y"]})), None).await;
    assert_eq!(r.error_code(), "InvalidDocument");

    let r = call(&app, "GET", "/projects/nope/tasks", None, None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.error_code(), "ProjectNotFound");

    let p = new_project(&app).await;
    let body = json!({"annotator_id": "ann1", "table_id": "t1", "text_block_id": "a", "label": "related", "revision": 1});
    let r = call(&app, "POST", &format!("/projects/{p}/labels"), Some(body.clone()), Some("ann2")).await;
    assert_eq!(r.status, StatusCode::FORBIDDEN);
    assert_eq!(r.error_code(), "AnnotatorMismatch");

    let mut unknown = body.clone();
    unknown["text_block_id"] = json!("t1");
    let r = call(&app, "POST", &format!("/projects/{p}/labels"), Some(unknown), None).await;
    assert_eq!(r.error_code(), "UnknownBlock");

    let req = Request::builder().method("POST").uri(format!("/projects/{p}/labels")).body(Body::from("{oops")).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn parse_endpoint_matches_library() {
    let app = service();
    let r = call(&app, "POST", "/parse", Some(json!({"document": doc_value(), "theta": 0.3, "jobs": 3})), None).await;
    assert_eq!(r.status, StatusCode::OK);
    let doc = parse_document_json(DOC.as_bytes()).unwrap();
    let want = export_parse(&parse_semantics(&doc, &HeuristicScorer, &ScorerConfig::with_theta(0.3)).unwrap());
    assert_eq!(r.bytes, want);

    let r = call(&app, "POST", "/parse", Some(json!({"document": doc_value(), "theta": 1.5})), None).await;
    assert_eq!(r.error_code(), "InvalidConfig");
    let r = call(&app, "POST", "/parse", Some(json!({"document": doc_value(), "scorer": "llm-prompt"})), None).await;
    assert_eq!(r.error_code(), "InvalidConfig");
}

#[tokio::test]
async fn unreachable_scorer_is_bad_gateway() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let app = service();
    let body = json!({"document": doc_value(), "scorer": "remote", "endpoint": format!("http://127.0.0.1:{port}")});
    let r = call(&app, "POST", "/parse", Some(body), None).await;
    assert_eq!(r.status, StatusCode::BAD_GATEWAY);
    assert_eq!(r.error_code(), "ScorerUnavailable");
}

#[tokio::test]
async fn retrieve_on_single_table_document() {
    let app = service();
    for k in [1, 3] {
        let r = call(&app, "POST", "/retrieve", Some(json!({"document": doc_value(), "query": "ablation results", "k": k})), None).await;
        assert_eq!(r.status, StatusCode::OK);
        let v = r.json();
        assert_eq!(v["ranked"].as_array().unwrap().len(), 1);
        assert_eq!(v["ranked"][0]["table_block_id"], "t1");
        assert_eq!(v["k"], k);
    }
    let r = call(&app, "POST", "/retrieve", Some(json!({"document": doc_value(), "query": "x", "k": 0})), None).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn page_images_and_ui_are_served() {
    let dir = tempfile::tempdir().unwrap();
    let pages = dir.path().join("pages");
    std::fs::create_dir_all(pages.join("fx")).unwrap();
    std::fs::write(pages.join("fx").join("0.png"), b"\x89PNG fake").unwrap();
    let ui = dir.path().join("ui");
    std::fs::create_dir_all(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<html></html>").unwrap();
    let app = app(ServiceConfig {
        page_images: Some(pages),
        ui_dir: Some(ui),
        ..Default::default()
    })
    .unwrap();

    let r = call(&app, "POST", "/projects", Some(json!({"document": doc_value(), "annotators": ["x", "y"]})), None).await;
    let project = r.json();
    assert_eq!(project["annotation_mode"], "page_image");
    let p = project["project_id"].as_str().unwrap();
    let tasks = call(&app, "GET", &format!("/projects/{p}/tasks"), None, None).await.json();
    let url = tasks["tasks"][0]["page_image"].as_str().unwrap().to_string();
    assert_eq!(url, "/pages/fx/0.png");
    let img = call(&app, "GET", &url, None, None).await;
    assert_eq!(img.status, StatusCode::OK);
    assert_eq!(img.bytes, b"\x89PNG fake");
    let index = call(&app, "GET", "/ui/index.html", None, None).await;
    assert_eq!(index.status, StatusCode::OK);
}

#[tokio::test]
async fn state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServiceConfig {
        log_path: Some(dir.path().join("events.jsonl")),
        ..Default::default()
    };
    let first = app(cfg.clone()).unwrap();
    let p = new_project(&first).await;
    assert_eq!(put_label(&first, &p, "ann1", "a", "related", 1).await.status, StatusCode::OK);
    let before = call(&first, "GET", &format!("/projects/{p}/tasks"), None, None).await.bytes;
    drop(first);
    let second = app(cfg).unwrap();
    let after = call(&second, "GET", &format!("/projects/{p}/tasks"), None, None).await.bytes;
    assert_eq!(before, after);
    assert_eq!(put_label(&second, &p, "ann1", "a", "unrelated", 2).await.status, StatusCode::OK);
}
