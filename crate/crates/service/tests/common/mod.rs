#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use casegen_core::bundle::write_bundle_dir;
use casegen_core::compile_workbook;
use casegen_core::testing::fixtures_dir;
use casegen_core::Timestamp;
use casegen_service::library::zip_dir;
use casegen_service::{router, Service};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

pub const MEDICAL: &str = "medical_emergency";
pub const FIXTURES: [&str; 4] = ["general_practitioner", "law", "mechanics", MEDICAL];

pub fn workbook(name: &str) -> PathBuf {
    fixtures_dir().join("workbooks").join(name)
}

/// Compiles a fixture workbook into a bundle directory under `out`.
pub fn bundle_dir(name: &str, out: &Path) -> PathBuf {
    let compiled = compile_workbook(&workbook(name));
    let case = compiled.case.expect("fixture compiles");
    let dir = out.join(name);
    write_bundle_dir(&case, &dir, Some(&workbook(name))).unwrap();
    dir
}

pub fn fixture_zip(name: &str) -> Vec<u8> {
    let tmp = tempfile::tempdir().unwrap();
    zip_dir(&bundle_dir(name, tmp.path())).unwrap()
}

/// A service over a temp store with a hand-driven clock.
pub struct App {
    pub store: PathBuf,
    pub clock: Arc<AtomicU64>,
    pub service: Arc<Service>,
    pub router: Router,
}

impl App {
    pub fn open(store: &Path) -> App {
        App::open_at(store, Arc::new(AtomicU64::new(1_700_000_000_000)))
    }

    pub fn open_at(store: &Path, clock: Arc<AtomicU64>) -> App {
        let c = clock.clone();
        let service = Arc::new(
            Service::open(store, Arc::new(move || Timestamp(c.load(Ordering::SeqCst)))).unwrap(),
        );
        App {
            store: store.to_path_buf(),
            clock,
            router: router(service.clone(), None),
            service,
        }
    }

    /// Reopens the same store, as after a restart.
    pub fn restart(&self) -> App {
        App::open_at(&self.store, self.clock.clone())
    }

    pub fn tick(&self, ms: u64) {
        self.clock.fetch_add(ms, Ordering::SeqCst);
    }

    pub async fn raw(
        &self,
        method: &str,
        uri: &str,
        token: Option<&str>,
        body: Body,
    ) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let resp = self
            .router
            .clone()
            .oneshot(req.body(body).unwrap())
            .await
            .unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes)
                .unwrap_or_else(|_| json!(String::from_utf8_lossy(&bytes)))
        };
        (status, value)
    }

    pub async fn get(&self, uri: &str, token: Option<&str>) -> (StatusCode, Value) {
        self.raw("GET", uri, token, Body::empty()).await
    }

    pub async fn post(&self, uri: &str, token: Option<&str>, body: Value) -> (StatusCode, Value) {
        self.raw("POST", uri, token, Body::from(body.to_string()))
            .await
    }

    pub async fn upload(&self, zip: Vec<u8>) -> (StatusCode, Value) {
        self.raw("POST", "/api/v1/cases", None, Body::from(zip))
            .await
    }

    pub async fn upload_fixture(&self, name: &str) -> String {
        let (status, body) = self.upload(fixture_zip(name)).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        body["id"].as_str().unwrap().to_string()
    }

    /// Creates a session and returns (session_id, join_code, teacher_token).
    pub async fn session(&self, config: Value) -> (String, String, String) {
        let (status, body) = self.post("/api/v1/sessions", None, config).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        (
            body["session_id"].as_str().unwrap().into(),
            body["join_code"].as_str().unwrap().into(),
            body["teacher_token"].as_str().unwrap().into(),
        )
    }

    /// Joins and returns the player token.
    pub async fn join(&self, session: &str, code: &str, name: &str, group: Option<&str>) -> String {
        let (status, body) = self
            .post(
                &format!("/api/v1/sessions/{session}/join"),
                None,
                json!({ "join_code": code, "display_name": name, "group": group }),
            )
            .await;
        assert_eq!(status, StatusCode::OK, "{body}");
        body["token"].as_str().unwrap().into()
    }

    pub async fn play(&self, token: &str, action: &str, body: Value) -> (StatusCode, Value) {
        self.post(&format!("/api/v1/play/{action}"), Some(token), body)
            .await
    }
}

/// The perfect medical play, as HTTP calls. Returns the final report.
pub async fn play_medical_perfect(app: &App, token: &str) -> Value {
    let ok = |(s, b): (StatusCode, Value)| {
        assert_eq!(s, StatusCode::OK, "{b}");
        b
    };
    for (card, wait) in [("oxygen", 30_000), ("iv_line", 45_000)] {
        ok(app.play(token, "perform", json!({ "card_id": card })).await);
        app.tick(wait);
    }
    ok(app
        .play(token, "perform", json!({ "card_id": "history" }))
        .await);
    ok(app
        .play(
            token,
            "answer",
            json!({ "card_id": "history", "choices": [1] }),
        )
        .await);
    ok(app
        .play(token, "perform", json!({ "card_id": "troponin" }))
        .await);
    app.tick(60_000);
    ok(app
        .play(token, "perform", json!({ "card_id": "ecg" }))
        .await);
    ok(app
        .play(token, "answer", json!({ "card_id": "ecg", "choices": [1] }))
        .await);
    app.tick(120_000);
    ok(app
        .play(token, "perform", json!({ "card_id": "coronarography" }))
        .await);
    let body = ok(app
        .play(
            token,
            "diagnose",
            json!({ "submission": {
                "pathology": { "chosen": ["mi"] },
                "medical_ward": { "chosen": ["cardiology"] },
                "prescription": { "chosen": ["aspirin", "heparin"] },
                "pre_emergency_care": { "chosen": ["cath_lab"], "free_text": ["arrange a direct transfer"] },
            }}),
        )
        .await);
    body["report"].clone()
}
