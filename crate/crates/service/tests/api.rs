use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use lime_core::data::{synth_corpus_with_signal, SignalToken, SynthConfig};
use lime_service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

fn config(dir: &Path) -> ServiceConfig {
    ServiceConfig {
        data_dir: dir.to_path_buf(),
        default_n: 500,
        session_pool: 30,
        master_seed: 11,
        ..Default::default()
    }
}

fn with_synth(dir: &Path) -> (Arc<AppState>, Router, Vec<SignalToken>) {
    let state = Arc::new(AppState::open(config(dir)).unwrap());
    let (mut corpus, signal) = synth_corpus_with_signal(&SynthConfig::strong_signal(400), 3).unwrap();
    corpus.name = "synth".into();
    state.register_dataset(corpus).unwrap();
    let app = router(state.clone());
    (state, app, signal)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn train(app: &Router, kind: &str, seed: u64) -> Value {
    let (status, body) = call(
        app,
        "POST",
        "/api/models",
        Some(json!({"dataset": "synth", "kind": kind, "seed": seed})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    body
}

fn explanation_tokens(e: &Value) -> BTreeSet<String> {
    e["features"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["token"].as_str().unwrap().to_owned())
        .collect()
}

#[tokio::test]
async fn dataset_registry() {
    let dir = tempfile::tempdir().unwrap();
    let state = Arc::new(AppState::open(config(dir.path())).unwrap());
    let app = router(state.clone());
    let (status, body) = call(&app, "GET", "/api/datasets", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!([]));

    let (corpus, _) = synth_corpus_with_signal(&SynthConfig::strong_signal(100), 1).unwrap();
    let n_features = corpus.vocabulary().len();
    let mut corpus = corpus;
    corpus.name = "tiny".into();
    state.register_dataset(corpus).unwrap();
    let (_, body) = call(&app, "GET", "/api/datasets", None).await;
    assert_eq!(body, json!([{"name": "tiny", "n_docs": 100, "n_features": n_features}]));

    let req = Request::get("/api/datasets")
        .header("accept", "application/x-unknown")
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "application/json");
}

#[tokio::test]
async fn training() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app, _) = with_synth(dir.path());
    let a = train(&app, "logreg", 5).await;
    assert!(a["metrics"]["heldout_accuracy"].as_f64().unwrap() >= 0.9, "{a}");
    let b = train(&app, "logreg", 5).await;
    assert_eq!(a["weights_hash"], b["weights_hash"]);
    assert_eq!(a["model_id"], b["model_id"]);

    let (status, _) = call(&app, "POST", "/api/models", Some(json!({"dataset": "synth", "kind": "svm"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(
        &app,
        "POST",
        "/api/models",
        Some(json!({"dataset": "synth", "kind": "logreg", "params": {"l2": -1.0}})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, body) = call(&app, "POST", "/api/models", Some(json!({"dataset": "nope", "kind": "logreg"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"].as_str().unwrap().contains("nope"));

    let tree = train(&app, "decision_tree", 0).await;
    let (status, doc) = call(&app, "GET", &format!("/api/models/{}", tree["model_id"].as_str().unwrap()), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(doc["model"]["spec"]["kind"], "decision_tree");
    let (_, list) = call(&app, "GET", "/api/models", None).await;
    assert_eq!(list.as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn explaining() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app, _) = with_synth(dir.path());
    let model = train(&app, "logreg", 0).await;
    let uri = format!("/api/models/{}/explain", model["model_id"].as_str().unwrap());

    let req = json!({"instance_index": 3, "k": 10, "n": 400, "seed": 9});
    let (status, a) = call(&app, "POST", &uri, Some(req.clone())).await;
    assert_eq!(status, StatusCode::OK, "{a}");
    assert!(a["features"].as_array().unwrap().len() <= 10);
    assert_eq!(a["config"], json!({"k": 10, "n": 400, "sigma": 0.25, "seed": 9, "distance": "cosine"}));
    let (_, b) = call(&app, "POST", &uri, Some(req)).await;
    assert_eq!(a, b);

    let (status, e) = call(&app, "POST", &uri, Some(json!({"text": "w00000 w00001 w00002", "k": 2}))).await;
    assert_eq!(status, StatusCode::OK, "{e}");
    assert!(e["features"].as_array().unwrap().len() <= 2);

    let (status, _) = call(&app, "POST", &uri, Some(json!({"text": "zzz qqq"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "POST", &uri, Some(json!({"instance_index": 100000}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "POST", &uri, Some(json!({}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "POST", "/api/models/ffff/explain", Some(json!({"instance_index": 0}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn picking() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app, _) = with_synth(dir.path());
    let model = train(&app, "logreg", 0).await;
    let uri = format!("/api/models/{}/pick", model["model_id"].as_str().unwrap());

    let (status, all) = call(
        &app,
        "POST",
        &uri,
        Some(json!({"instance_indices": [4, 1, 7], "B": 5, "k": 5, "n": 300})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{all}");
    let mut selected: Vec<u64> = all["selected"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    selected.sort();
    assert_eq!(selected, vec![1, 4, 7]);

    let (_, some) = call(
        &app,
        "POST",
        &uri,
        Some(json!({"instance_indices": (0..20).collect::<Vec<_>>(), "B": 4, "k": 5, "n": 300})),
    )
    .await;
    assert_eq!(some["selected"].as_array().unwrap().len(), 4);
    assert_eq!(some["explanations"].as_array().unwrap().len(), 4);
    let trace: Vec<f64> = some["coverage_trace"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(trace.windows(2).all(|w| w[1] >= w[0]));

    let (status, _) = call(&app, "POST", &uri, Some(json!({"instance_indices": [], "B": 2}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "POST", &uri, Some(json!({"instance_indices": [0], "B": 0}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "POST", "/api/models/0/pick", Some(json!({"instance_indices": [0], "B": 1}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn sessions() {
    let dir = tempfile::tempdir().unwrap();
    let (state, app, signal) = with_synth(dir.path());
    let spec = json!({"kind": "logreg"});

    let (status, s) = call(&app, "POST", "/api/sessions", Some(json!({"dataset": "synth", "model_spec": spec}))).await;
    assert_eq!(status, StatusCode::OK, "{s}");
    assert_eq!(s["B"], 10);
    assert_eq!(s["k"], 10);
    let round0 = &s["rounds"][0];
    assert_eq!(round0["index"], 0);
    assert_eq!(round0["picked"].as_array().unwrap().len(), 10);
    for e in round0["picked"].as_array().unwrap() {
        assert!(e["features"].as_array().unwrap().len() <= 10);
    }
    let id = s["id"].as_str().unwrap().to_owned();
    let (status, again) = call(&app, "GET", &format!("/api/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again, s);

    let (_, other) = call(&app, "POST", "/api/sessions", Some(json!({"dataset": "synth", "model_spec": spec, "B": 2, "k": 3}))).await;
    assert_ne!(other["id"], s["id"]);

    let rounds = format!("/api/sessions/{id}/rounds");
    let (status, r1) = call(&app, "POST", &rounds, Some(json!({"remove_words": []}))).await;
    assert_eq!(status, StatusCode::OK, "{r1}");
    assert_eq!(r1["index"], 1);
    assert_eq!(r1["metrics"], round0["metrics"]);

    // removing every planted signal word
    let planted: Vec<String> = signal.iter().map(|t| t.token.clone()).collect();
    let (status, r2) = call(&app, "POST", &rounds, Some(json!({"remove_words": planted}))).await;
    assert_eq!(status, StatusCode::OK, "{r2}");
    assert!(
        r2["metrics"]["heldout_accuracy"].as_f64().unwrap() < round0["metrics"]["heldout_accuracy"].as_f64().unwrap() - 0.1,
        "{} vs {}",
        r2["metrics"],
        round0["metrics"]
    );
    for e in r2["picked"].as_array().unwrap() {
        assert!(explanation_tokens(e).is_disjoint(&planted.iter().cloned().collect()));
    }

    // explanations of the retrained model never mention removed words either
    let explain = format!("/api/models/{}/explain", r2["model_id"].as_str().unwrap());
    let text = planted.join(" ") + " w00500 w00501";
    let (status, e) = call(&app, "POST", &explain, Some(json!({"text": text, "n": 300}))).await;
    assert_eq!(status, StatusCode::OK, "{e}");
    assert!(explanation_tokens(&e).is_disjoint(&planted.iter().cloned().collect()));
    let (status, _) = call(&app, "POST", &explain, Some(json!({"text": planted.join(" ")}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (_, full) = call(&app, "GET", &format!("/api/sessions/{id}"), None).await;
    let all_rounds = full["rounds"].as_array().unwrap();
    assert_eq!(all_rounds.len(), 3);
    let sets: Vec<BTreeSet<String>> = all_rounds
        .iter()
        .map(|r| serde_json::from_value(r["removed_words_cumulative"].clone()).unwrap())
        .collect();
    assert!(sets.windows(2).all(|w| w[0].is_subset(&w[1])));

    let (status, _) = call(&app, "POST", &rounds, Some(json!({"remove_words": ["notaword"]}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "GET", "/api/sessions/s999999", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "POST", "/api/sessions/s999999/rounds", Some(json!({"remove_words": []}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "POST", "/api/sessions", Some(json!({"dataset": "nope", "model_spec": spec}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    // a round in flight blocks a second one, but not reads
    let guard = state.begin_round(&id).unwrap();
    let (status, _) = call(&app, "POST", &rounds, Some(json!({"remove_words": []}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call(&app, "GET", &format!("/api/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    drop(guard);
    let (status, _) = call(&app, "POST", &rounds, Some(json!({"remove_words": []}))).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn restart_reproduces_responses() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app, _) = with_synth(dir.path());
    let model = train(&app, "decision_tree", 2).await;
    let model_uri = format!("/api/models/{}", model["model_id"].as_str().unwrap());
    let explain_req = json!({"instance_index": 0, "n": 300, "seed": 1});
    let (_, explained) = call(&app, "POST", &format!("{model_uri}/explain"), Some(explain_req.clone())).await;
    let (_, s) = call(&app, "POST", "/api/sessions", Some(json!({"dataset": "synth", "model_spec": {"kind": "knn"}, "B": 3}))).await;
    let id = s["id"].as_str().unwrap().to_owned();
    let (_, _) = call(&app, "POST", &format!("/api/sessions/{id}/rounds"), Some(json!({"remove_words": ["w00000"]}))).await;

    let mut before = Vec::new();
    for uri in ["/api/datasets".to_string(), "/api/models".into(), model_uri.clone(), format!("/api/sessions/{id}")] {
        before.push(call(&app, "GET", &uri, None).await);
    }
    drop(app);

    let state = Arc::new(AppState::open(config(dir.path())).unwrap());
    let app = router(state);
    for (uri, expected) in ["/api/datasets".to_string(), "/api/models".into(), model_uri.clone(), format!("/api/sessions/{id}")]
        .iter()
        .zip(&before)
    {
        assert_eq!(&call(&app, "GET", uri, None).await, expected, "{uri}");
    }
    let (_, again) = call(&app, "POST", &format!("{model_uri}/explain"), Some(explain_req)).await;
    assert_eq!(again, explained);

    // session ids keep counting after a restart
    let (_, s2) = call(&app, "POST", "/api/sessions", Some(json!({"dataset": "synth", "model_spec": {"kind": "knn"}, "B": 1}))).await;
    assert_ne!(s2["id"], s["id"]);
}

#[tokio::test]
async fn replayed_transcript_matches() {
    let run = || async {
        let dir = tempfile::tempdir().unwrap();
        let (_, app, _) = with_synth(dir.path());
        let (_, s) = call(&app, "POST", "/api/sessions", Some(json!({"dataset": "synth", "model_spec": {"kind": "logreg"}, "B": 3, "k": 5}))).await;
        let id = s["id"].as_str().unwrap().to_owned();
        call(&app, "POST", &format!("/api/sessions/{id}/rounds"), Some(json!({"remove_words": ["w00001", "w00004"]}))).await;
        let (_, mut full) = call(&app, "GET", &format!("/api/sessions/{id}"), None).await;
        full["created_at"] = Value::Null;
        full
    };
    assert_eq!(run().await, run().await);
}

#[tokio::test]
async fn cors_allows_any_origin() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app, _) = with_synth(dir.path());
    let req = Request::get("/api/datasets")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "*");
}
