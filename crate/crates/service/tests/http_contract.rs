use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use reqwest::blocking::Client;
use serde_json::{json, Value};

use scorpid_core::corpus::{load_manifest, Corpus};
use scorpid_core::infer::{Backend, ImageInput};
use scorpid_core::report::{run_evaluation, EvalMode, EvalRequest};
use scorpid_core::synth::{classification_fixture, materialize, DetectionFixture};
use scorpid_service::{build_backend, AppState, BackgroundServer, RemoteBackend, SightingStore};

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    manifest: PathBuf,
    corpus: Corpus,
}

fn fixture(corpus: Corpus) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    materialize(&corpus, &root, 11).unwrap();
    let manifest = root.join("manifest.jsonl");
    let corpus = load_manifest(&manifest).unwrap();
    Fixture {
        _dir: dir,
        root,
        manifest,
        corpus,
    }
}

fn reference_state(f: &Fixture, eps: f64, max_body: usize) -> AppState {
    let desc = format!("reference:{}:{eps}:5", f.manifest.display()).parse().unwrap();
    let backend = build_backend(&desc, Duration::from_secs(5)).unwrap();
    AppState::new(backend, SightingStore::in_memory(), max_body)
}

fn image_bytes(f: &Fixture, id: &str) -> Vec<u8> {
    std::fs::read(f.root.join(&f.corpus.get(id).unwrap().path)).unwrap()
}

fn png(img: &image::RgbImage) -> Vec<u8> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).unwrap();
    out.into_inner()
}

fn client() -> Client {
    Client::builder().timeout(Duration::from_secs(10)).build().unwrap()
}

fn post_bytes(url: &str, body: Vec<u8>) -> (u16, Value) {
    let resp = client()
        .post(url)
        .header("content-type", "application/octet-stream")
        .body(body)
        .send()
        .unwrap();
    let status = resp.status().as_u16();
    (status, resp.json().unwrap_or(Value::Null))
}

fn detection_fixture() -> Fixture {
    fixture(DetectionFixture::new(12, 8).with_seed(2).build())
}

#[test]
fn health_and_unknown_routes() {
    let f = detection_fixture();
    let srv = BackgroundServer::start(reference_state(&f, 0.0, 1 << 24)).unwrap();
    let resp = client().get(format!("{}/health", srv.url())).send().unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    let body: Value = resp.json().unwrap();
    assert_eq!(body["status"], "ok");
    assert!(body["backend"].as_str().unwrap().starts_with("reference"));
    let resp = client().get(format!("{}/nope", srv.url())).send().unwrap();
    assert_eq!(resp.status().as_u16(), 404);
}

#[test]
fn detect_contract() {
    let f = detection_fixture();
    let srv = BackgroundServer::start(reference_state(&f, 0.0, 1 << 24)).unwrap();
    let rec = f.corpus.get("pos0000").unwrap();
    for t in ["0.5", "1.0"] {
        let (status, body) = post_bytes(&format!("{}/detect?threshold={t}", srv.url()), image_bytes(&f, "pos0000"));
        assert_eq!(status, 200);
        let dets = body["detections"].as_array().unwrap();
        assert_eq!(dets.len(), 1, "threshold {t}");
        let b = &rec.boxes[0];
        assert_eq!(dets[0], json!({"x": b.x, "y": b.y, "w": b.w, "h": b.h, "score": 1.0, "label": b.label}));
        assert!(body["latency_ms"].as_f64().unwrap() >= 0.0);
    }
    let (status, body) = post_bytes(&format!("{}/detect", srv.url()), image_bytes(&f, "neg0000"));
    assert_eq!(status, 200);
    assert_eq!(body["detections"], json!([]));

    let (status, _) = post_bytes(&format!("{}/detect", srv.url()), b"just some text".to_vec());
    assert_eq!(status, 400);
    let (status, _) = post_bytes(&format!("{}/detect?threshold=1.5", srv.url()), image_bytes(&f, "pos0000"));
    assert_eq!(status, 400);
    let (status, _) = post_bytes(&format!("{}/detect", srv.url()), png(&image::RgbImage::new(64, 48)));
    assert_eq!(status, 404);
}

#[test]
fn body_limit_gives_413() {
    let f = detection_fixture();
    let srv = BackgroundServer::start(reference_state(&f, 0.0, 256)).unwrap();
    let (status, _) = post_bytes(&format!("{}/detect", srv.url()), image_bytes(&f, "pos0000"));
    assert_eq!(status, 413);
}

#[test]
fn classify_contract() {
    let f = fixture(classification_fixture([2, 2, 2], 32, 24, 1));
    let srv = BackgroundServer::start(reference_state(&f, 0.0, 1 << 24)).unwrap();
    let (status, body) = post_bytes(&format!("{}/classify", srv.url()), image_bytes(&f, "tityus0000"));
    assert_eq!(status, 200);
    assert_eq!(body["label"], "Tityus");
    assert_eq!(body["dangerous"], true);
    assert_eq!(body["low_confidence"], false);
    assert_eq!(body["probs"], json!({"Tityus": 1.0, "Bothriurus": 0.0, "None": 0.0}));
    let (_, body) = post_bytes(&format!("{}/classify", srv.url()), image_bytes(&f, "bothriurus0001"));
    assert_eq!(body["dangerous"], false);
    let (status, _) = post_bytes(&format!("{}/classify", srv.url()), png(&image::RgbImage::new(32, 24)));
    assert_eq!(status, 404);
    let (status, _) = post_bytes(&format!("{}/classify", srv.url()), Vec::new());
    assert_eq!(status, 400);
}

#[test]
fn evaluate_runs_are_stored_and_match_local_reports() {
    let f = detection_fixture();
    let state = reference_state(&f, 0.0, 1 << 24);
    let backend = state.backend.clone();
    let srv = BackgroundServer::start(state).unwrap();
    let req = EvalRequest::new(EvalMode::Detect, f.manifest.to_str().unwrap());

    let (id1, report1) = scorpid_service::client::evaluate(&srv.url(), &req, Duration::from_secs(10)).unwrap();
    let (id2, report2) = scorpid_service::client::evaluate(&srv.url(), &req, Duration::from_secs(10)).unwrap();
    assert_ne!(id1, id2);
    assert_eq!(report1, report2);
    let local = run_evaluation(&req, Some(backend.as_ref())).unwrap().to_json();
    assert_eq!(report1, local);
    let doc: Value = serde_json::from_slice(&report1).unwrap();
    assert_eq!(doc["roc"]["auc"], 1.0);
    assert_eq!(doc["metrics"]["accuracy"], 1.0);

    let resp = client().get(format!("{}/evaluate/run-999999", srv.url())).send().unwrap();
    assert_eq!(resp.status().as_u16(), 404);

    let bad = EvalRequest::new(EvalMode::Classify, f.manifest.to_str().unwrap());
    let resp = client().post(format!("{}/evaluate", srv.url())).json(&bad).send().unwrap();
    assert_eq!(resp.status().as_u16(), 422);
    let resp = client().post(format!("{}/evaluate", srv.url())).body("{").send().unwrap();
    assert_eq!(resp.status().as_u16(), 400);
}

#[test]
fn sightings_round_trip() {
    let f = detection_fixture();
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("sightings.jsonl");
    let mut state = reference_state(&f, 0.0, 1 << 24);
    state.sightings = Arc::new(SightingStore::open(&log).unwrap());
    let srv = BackgroundServer::start(state).unwrap();
    let url = format!("{}/sightings", srv.url());

    let new = json!({
        "image_ref": "frame-0007",
        "detections": [{"x": 1, "y": 2, "w": 3, "h": 4, "score": 0.9, "label": "Tityus"}],
        "class_scores": {"probs": {"Tityus": 0.9, "Bothriurus": 0.05, "None": 0.05}},
        "operator_note": "under a rock",
        "operator_verdict": "rejected"
    });
    let resp = client().post(&url).json(&new).send().unwrap();
    assert_eq!(resp.status().as_u16(), 201);
    let created: Value = resp.json().unwrap();
    assert_eq!(created["id"], 1);
    assert!(created["timestamp"].as_u64().unwrap() > 0);
    for key in ["image_ref", "detections", "operator_note", "operator_verdict"] {
        assert_eq!(created[key], new[key], "{key}");
    }
    assert_eq!(created["class_scores"]["label"], "Tityus");

    let listed: Value = client().get(&url).send().unwrap().json().unwrap();
    assert_eq!(listed["sightings"], json!([created.clone()]));
    let later: Value = client()
        .get(format!("{url}?since={}", u64::MAX))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(later["sightings"], json!([]));
    let confirmed: Value = client().get(format!("{url}?verdict=confirmed")).send().unwrap().json().unwrap();
    assert_eq!(confirmed["sightings"], json!([]));

    let resp = client()
        .put(format!("{url}/1/verdict"))
        .json(&json!({"verdict": "confirmed"}))
        .send()
        .unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    let resp = client()
        .put(format!("{url}/42/verdict"))
        .json(&json!({"verdict": "confirmed"}))
        .send()
        .unwrap();
    assert_eq!(resp.status().as_u16(), 404);

    let resp = client().post(&url).json(&json!({"operator_note": "no image"})).send().unwrap();
    assert_eq!(resp.status().as_u16(), 422);
    let resp = client()
        .post(&url)
        .json(&json!({"id": 5, "image_ref": "x"}))
        .send()
        .unwrap();
    assert_eq!(resp.status().as_u16(), 422);

    drop(srv);
    let replayed = SightingStore::open(&log).unwrap().list(&Default::default());
    assert_eq!(replayed.len(), 1);
    assert_eq!(replayed[0].operator_verdict, scorpid_service::Verdict::Confirmed);
}

fn check_contract(backend: &dyn Backend, f: &Fixture, root: &Path) {
    for rec in f.corpus.records() {
        let bytes = std::fs::read(root.join(&rec.path)).unwrap();
        let dets = backend.detect(&ImageInput::Bytes(bytes.clone())).unwrap();
        for d in &dets {
            d.check().unwrap();
            assert!(d.fits(rec), "{}", rec.id);
        }
        assert!(dets.windows(2).all(|w| w[0].score >= w[1].score));
        let scores = backend.classify(&ImageInput::Bytes(bytes)).unwrap();
        assert!((scores.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        assert_eq!(scores.dangerous(), scores.label().is_dangerous());
    }
}

#[test]
fn reference_and_remote_backends_share_the_contract() {
    let f = fixture(DetectionFixture::new(10, 6).with_max_boxes(3).with_seed(4).build());
    let upstream_state = reference_state(&f, 0.6, 1 << 24);
    let reference = upstream_state.backend.clone();
    let upstream = BackgroundServer::start(upstream_state).unwrap();
    let remote = RemoteBackend::new(upstream.url(), Duration::from_secs(5)).unwrap();

    check_contract(reference.as_ref(), &f, &f.root);
    check_contract(&remote, &f, &f.root);
    remote.health().unwrap();

    for rec in f.corpus.records() {
        let bytes = image_bytes(&f, &rec.id);
        let mut local = reference.detect(&ImageInput::Bytes(bytes.clone())).unwrap();
        for d in &mut local {
            d.image_id.clear();
        }
        assert_eq!(remote.detect(&ImageInput::Bytes(bytes.clone())).unwrap(), local);
        assert_eq!(
            remote.classify(&ImageInput::Bytes(bytes.clone())).unwrap(),
            reference.classify(&ImageInput::Bytes(bytes)).unwrap()
        );
    }

    // A service fronting the remote backend reports 503 once upstream is gone.
    let front = BackgroundServer::start(AppState::new(
        Arc::new(RemoteBackend::new(upstream.url(), Duration::from_secs(2)).unwrap()),
        SightingStore::in_memory(),
        1 << 24,
    ))
    .unwrap();
    let ok = client().get(format!("{}/health", front.url())).send().unwrap();
    assert_eq!(ok.status().as_u16(), 200);
    drop(upstream);
    let down = client().get(format!("{}/health", front.url())).send().unwrap();
    assert_eq!(down.status().as_u16(), 503);
    let body: Value = down.json().unwrap();
    assert!(!body["reason"].as_str().unwrap().is_empty());
    let (status, _) = post_bytes(&format!("{}/detect", front.url()), image_bytes(&f, "pos0000"));
    assert_eq!(status, 502);
}
