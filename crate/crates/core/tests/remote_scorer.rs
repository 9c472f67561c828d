//! Remote scorer client against in-process stub servers.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use tablescope_core::association::{PairText, RemoteScorer, ScoreQueryRequest, ScoreRequest};
use tablescope_core::synth::{random_document, SynthSpec};
use tablescope_core::{parse_semantics, Block, ScorerConfig, ScorerError};

type Log = Arc<Mutex<Vec<ScoreRequest>>>;

fn spawn(router: Router) -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

fn url(addr: SocketAddr) -> String {
    format!("http://{addr}")
}

/// Scores each pair by a deterministic function of its text and records requests.
fn recording_stub() -> (SocketAddr, Log) {
    let log: Log = Arc::default();
    async fn score(State(log): State<Log>, Json(req): Json<ScoreRequest>) -> Json<Value> {
        let scores: Vec<f64> = req
            .pairs
            .iter()
            .map(|p| (p.table_text.len() + p.text_text.len()) as f64 % 100.0 / 100.0)
            .collect();
        log.lock().unwrap().push(req);
        Json(json!({ "scores": scores }))
    }
    async fn score_query(Json(req): Json<ScoreQueryRequest>) -> Json<Value> {
        let scores: Vec<f64> = (0..req.tables.len()).map(|i| i as f64).collect();
        Json(json!({ "scores": scores }))
    }
    let router = Router::new()
        .route("/score", post(score))
        .route("/score_query", post(score_query))
        .with_state(log.clone());
    (spawn(router), log)
}

fn fixed_reply(body: Value) -> SocketAddr {
    let router = Router::new().route(
        "/score",
        post(move || {
            let body = body.clone();
            async move { Json(body) }
        }),
    );
    spawn(router)
}

fn pairs(n: usize) -> Vec<PairText> {
    (0..n)
        .map(|i| PairText {
            table_text: format!("table {i}"),
            text_text: "x".repeat(i),
        })
        .collect()
}

#[test]
fn constant_stub_returns_one_score_per_pair() {
    let addr = fixed_reply(json!({"scores": [0.5, 0.5, 0.5]}));
    let scorer = RemoteScorer::new(url(addr));
    assert_eq!(scorer.score_batch(&pairs(3)).unwrap(), vec![0.5, 0.5, 0.5]);
}

#[test]
fn wrong_count_is_protocol_error() {
    let addr = fixed_reply(json!({"scores": [0.5, 0.5]}));
    let err = RemoteScorer::new(url(addr)).score_batch(&pairs(3)).unwrap_err();
    assert!(matches!(err, ScorerError::Protocol(_)), "{err}");
}

#[test]
fn out_of_range_is_protocol_error() {
    let addr = fixed_reply(json!({"scores": [1.3]}));
    let err = RemoteScorer::new(url(addr)).score_batch(&pairs(1)).unwrap_err();
    assert!(matches!(err, ScorerError::Protocol(_)), "{err}");
}

#[test]
fn malformed_reply_is_protocol_error() {
    let addr = fixed_reply(json!({"probabilities": [0.1]}));
    let err = RemoteScorer::new(url(addr)).score_batch(&pairs(1)).unwrap_err();
    assert!(matches!(err, ScorerError::Protocol(_)));
}

#[test]
fn http_400_surfaces_server_error_text() {
    let router = Router::new().route(
        "/score",
        post(|| async { (StatusCode::BAD_REQUEST, Json(json!({"error": "batch too large"}))) }),
    );
    let err = RemoteScorer::new(url(spawn(router))).score_batch(&pairs(1)).unwrap_err();
    match err {
        ScorerError::Protocol(msg) => assert!(msg.contains("batch too large"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn unreachable_endpoint_is_transport_error() {
    // Bind then drop to get a port with nothing listening.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let scorer = RemoteScorer::with_timeout(format!("http://127.0.0.1:{port}"), Duration::from_secs(2));
    let err = scorer.score_batch(&pairs(1)).unwrap_err();
    assert!(matches!(err, ScorerError::Transport(_)), "{err}");
}

#[test]
fn batching_preserves_order_and_length() {
    let (addr, log) = recording_stub();
    let scorer = RemoteScorer::new(url(addr)).batch_size(7).max_in_flight(3);
    let input = pairs(50);
    let got = scorer.score_texts(&input).unwrap();
    let want: Vec<f64> = input
        .iter()
        .map(|p| (p.table_text.len() + p.text_text.len()) as f64 % 100.0 / 100.0)
        .collect();
    assert_eq!(got, want);
    let requests = log.lock().unwrap();
    assert_eq!(requests.len(), 8);
    assert!(requests.iter().all(|r| r.pairs.len() <= 7));
    let mut seen: Vec<PairText> = requests.iter().flat_map(|r| r.pairs.clone()).collect();
    seen.sort_by(|a, b| a.text_text.len().cmp(&b.text_text.len()));
    assert_eq!(seen, input);
}

#[test]
fn query_scoring_over_the_wire() {
    let (addr, _) = recording_stub();
    let scorer = RemoteScorer::new(url(addr));
    let tables: Vec<String> = (0..4).map(|i| format!("t{i}")).collect();
    assert_eq!(scorer.score_query_texts("q", &tables).unwrap(), vec![0.0, 1.0, 2.0, 3.0]);
    assert!(scorer.score_query_texts("q", &[]).unwrap().is_empty());
    assert!(matches!(scorer.score_query_texts(" ", &tables), Err(ScorerError::EmptyQuery)));
}

#[test]
fn parse_with_remote_scorer_matches_local_evaluation_for_any_jobs() {
    use rand::SeedableRng;
    let (addr, _) = recording_stub();
    let scorer = RemoteScorer::new(url(addr)).batch_size(5);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let doc = random_document(
        &mut rng,
        &SynthSpec { doc_id: "d".into(), source: "s".into(), n_pages: 3, n_tables: 3, n_texts: 12 },
    );
    let local = |t: &Block, s: &Block| (t.text.len() + s.text.len()) as f64 % 100.0 / 100.0;
    let mut cfg = ScorerConfig { batch_size: 5, ..Default::default() };
    let expected = parse_semantics(&doc, &local, &cfg).unwrap();
    for jobs in [1, 2, 4] {
        cfg.jobs = jobs;
        assert_eq!(parse_semantics(&doc, &scorer, &cfg).unwrap(), expected);
    }
}
