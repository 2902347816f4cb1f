//! An in-process app with two projects and a request helper.
#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use cal_core::clock::ManualClock;
use cal_core::fixtures;
use cal_core::store::Store;
use cal_server::{router, AppState};

pub const CREATOR: &str = "lead";
pub const TTL_MS: u64 = 60_000;

pub struct App {
    pub dir: tempfile::TempDir,
    pub state: Arc<AppState>,
    pub clock: Arc<ManualClock>,
    router: Router,
}

pub struct Reply {
    pub status: StatusCode,
    pub body: Value,
}

impl Reply {
    pub fn code(&self) -> &str {
        self.body["code"].as_str().unwrap_or("")
    }
}

/// The grice project with the skip-cascade code set on utterances.
pub fn cascade_project() -> Value {
    let mut p: Value = serde_json::from_str(fixtures::GRICE_PROJECT_JSON).unwrap();
    p["id"] = json!("cascade");
    p["code_sets"][0] = serde_json::from_str(fixtures::SKIP_CASCADE_JSON).unwrap();
    p["agreement_visibility"] = json!("all");
    p
}

impl App {
    /// A fresh data dir holding `grice-pilot` and `cascade`, both created by
    /// [`CREATOR`] over HTTP.
    pub async fn new() -> App {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("sample-transcripts.json"), fixtures::SAMPLE_TRANSCRIPTS_JSON).unwrap();
        let clock = Arc::new(ManualClock::ticking(1_000, 1));
        let store = Store::with_clock(dir.path(), clock.clone()).unwrap().sync(false);
        let state = AppState::with_session_ttl(store, TTL_MS);
        let app = App {
            router: router(state.clone(), None),
            dir,
            state,
            clock,
        };
        let grice: Value = serde_json::from_str(fixtures::GRICE_PROJECT_JSON).unwrap();
        for project in [grice, cascade_project()] {
            let r = app.send(Method::POST, "/projects", Some(CREATOR), Some(project.to_string())).await;
            assert_eq!(r.status, StatusCode::CREATED, "{}", r.body);
        }
        app
    }

    pub async fn send(&self, method: Method, uri: &str, who: Option<&str>, body: Option<String>) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(who) = who {
            req = req.header(cal_server::IDENTITY_HEADER, who);
        }
        let req = match body {
            Some(b) => req.header("content-type", "application/json").body(Body::from(b)),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let body = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
        };
        Reply { status, body }
    }

    pub async fn get(&self, uri: &str, who: &str) -> Reply {
        self.send(Method::GET, uri, Some(who), None).await
    }

    pub async fn post(&self, uri: &str, who: &str, body: Value) -> Reply {
        self.send(Method::POST, uri, Some(who), Some(body.to_string())).await
    }

    pub async fn put(&self, uri: &str, who: &str, body: Value) -> Reply {
        self.send(Method::PUT, uri, Some(who), Some(body.to_string())).await
    }

    /// The first utterance id of `conversation` spoken by `speaker`.
    pub fn utterance(&self, project: &str, conversation: &str, speaker: cal_core::config::Speaker) -> String {
        let p = self.state.project(project).unwrap();
        let p = p.read();
        p.conversation(conversation)
            .unwrap()
            .utterances
            .iter()
            .find(|u| u.speaker == speaker)
            .unwrap()
            .id
            .clone()
    }
}

pub fn label(conv: &str, utt: &str, category: &str, option: &str, expected: Option<u64>) -> Value {
    let mut body = json!({
        "example": {"conversation_id": conv, "utterance_id": utt},
        "category_id": category,
        "value": {"single": option},
    });
    if let Some(v) = expected {
        body["expected_version"] = json!(v);
    }
    body
}

/// One documented error case and what the API answered.
pub struct Case {
    pub name: &'static str,
    pub status: StatusCode,
    pub code: &'static str,
    pub reply: Reply,
}

impl Case {
    pub fn holds(&self) -> bool {
        self.reply.status == self.status && (self.code.is_empty() || self.reply.code() == self.code)
    }

    pub fn describe(&self) -> String {
        format!(
            "{}: want {} {}, got {} {}",
            self.name,
            self.status.as_u16(),
            self.code,
            self.reply.status.as_u16(),
            self.reply.code()
        )
    }
}

/// Drives every documented error case against a fresh app.
pub async fn contract_cases(app: &App) -> Vec<Case> {
    use cal_core::config::Speaker;
    use StatusCode as S;

    let mut cases = Vec::new();
    macro_rules! case {
        ($name:expr, $status:expr, $code:expr, $reply:expr) => {
            cases.push(Case {
                name: $name,
                status: $status,
                code: $code,
                reply: $reply,
            })
        };
    }

    let bot = app.utterance("cascade", "conv-001", Speaker::Bot);
    let human = app.utterance("cascade", "conv-001", Speaker::Human);
    let g_bot = app.utterance("grice-pilot", "conv-001", Speaker::Bot);

    // Project creation.
    case!(
        "malformed project JSON",
        S::BAD_REQUEST,
        "SYNTAX_ERROR",
        app.send(Method::POST, "/projects", Some(CREATOR), Some("{\"id\":".into())).await
    );
    let mut unknown = cascade_project();
    unknown["id"] = json!("other");
    unknown["colour"] = json!("red");
    case!("unknown project field", S::BAD_REQUEST, "SCHEMA_ERROR", app.post("/projects", CREATOR, unknown).await);
    let mut bad_rules = cascade_project();
    bad_rules["id"] = json!("bad-rules");
    bad_rules["code_sets"][0]["rules"][0]["trigger"]["category_id"] = json!("nope");
    let reply = app.post("/projects", CREATOR, bad_rules).await;
    let has_findings = reply.body["report"]["errors"].as_array().is_some_and(|e| !e.is_empty());
    case!(
        "invalid rules with findings",
        S::BAD_REQUEST,
        if has_findings { "SCHEMA_ERROR" } else { "SCHEMA_ERROR with report" },
        reply
    );
    case!("repeated project id", S::CONFLICT, "DUPLICATE_ID", app.post("/projects", CREATOR, cascade_project()).await);
    let mut escape = cascade_project();
    escape["id"] = json!("escape");
    escape["data_ref"] = json!("../outside.json");
    case!("data_ref outside data dir", S::BAD_REQUEST, "FORMAT_ERROR", app.post("/projects", CREATOR, escape).await);
    std::fs::write(app.dir.path().join("empty-text.json"), r#"[{"id":"c","utterances":[{"speaker":"bot","text":""}]}]"#)
        .unwrap();
    let mut bad_data = cascade_project();
    bad_data["id"] = json!("bad-data");
    bad_data["data_ref"] = json!("empty-text.json");
    case!("unimportable transcripts", S::BAD_REQUEST, "FORMAT_ERROR", app.post("/projects", CREATOR, bad_data).await);

    // Identity and lookup.
    case!(
        "missing identity",
        S::BAD_REQUEST,
        "MISSING_IDENTITY",
        app.send(Method::GET, "/projects/cascade/status", None, None).await
    );
    case!("unknown project", S::NOT_FOUND, "PROJECT_NOT_FOUND", app.get("/projects/nope/status", "ann1").await);
    case!(
        "unknown conversation",
        S::NOT_FOUND,
        "CONVERSATION_NOT_FOUND",
        app.get("/projects/cascade/conversations/nope", "ann1").await
    );
    case!(
        "non-member labeling view",
        S::FORBIDDEN,
        "NOT_A_MEMBER",
        app.get("/projects/cascade/conversations/conv-001", "mallory").await
    );

    // Labels.
    case!(
        "unknown utterance",
        S::NOT_FOUND,
        "UTTERANCE_NOT_FOUND",
        app.put("/projects/cascade/labels", "ann1", label("conv-001", "nope", "relevance", "yes", None)).await
    );
    case!(
        "unknown category",
        S::NOT_FOUND,
        "CATEGORY_NOT_FOUND",
        app.put("/projects/cascade/labels", "ann1", label("conv-001", &bot, "nope", "yes", None)).await
    );
    case!(
        "unknown option",
        S::NOT_FOUND,
        "OPTION_NOT_FOUND",
        app.put("/projects/cascade/labels", "ann1", label("conv-001", &bot, "relevance", "maybe", None)).await
    );
    let mut multi = label("conv-001", &bot, "relevance", "yes", None);
    multi["value"] = json!({"multi": ["yes"]});
    case!("value of the wrong kind", S::UNPROCESSABLE_ENTITY, "INVALID_VALUE", app.put("/projects/cascade/labels", "ann1", multi).await);
    case!(
        "category not applicable to speaker",
        S::UNPROCESSABLE_ENTITY,
        "HIDDEN_CATEGORY",
        app.put("/projects/grice-pilot/labels", "ann1", label("conv-001", &g_bot, "topic_change", "yes", None)).await
    );
    let first = app
        .put("/projects/cascade/labels", "ann1", label("conv-001", &bot, "relevance", "not_applicable", None))
        .await;
    assert_eq!(first.status, S::OK, "{}", first.body);
    case!(
        "disabled option",
        S::UNPROCESSABLE_ENTITY,
        "DISABLED_OPTION",
        app.put("/projects/cascade/labels", "ann1", label("conv-001", &bot, "quantity", "yes", Some(1))).await
    );
    case!(
        "stale version",
        S::CONFLICT,
        "VERSION_CONFLICT",
        app.put("/projects/cascade/labels", "ann1", label("conv-001", &bot, "relevance", "yes", Some(0))).await
    );
    case!(
        "non-member label",
        S::FORBIDDEN,
        "NOT_A_MEMBER",
        app.put("/projects/cascade/labels", "mallory", label("conv-001", &human, "relevance", "yes", None)).await
    );

    // Wizards.
    let start = |cat: &str| {
        json!({"example": {"conversation_id": "conv-001", "utterance_id": g_bot}, "category_id": cat})
    };
    case!("no wizard for category", S::NOT_FOUND, "NO_WIZARD", app.post("/projects/grice-pilot/wizard/start", "ann1", start("manner")).await);
    let s = app.post("/projects/grice-pilot/wizard/start", "ann1", start("relevance")).await;
    let sid = s.body["session_id"].as_str().unwrap_or_default().to_string();
    case!(
        "back at first question",
        S::CONFLICT,
        "AT_ROOT",
        app.send(Method::POST, &format!("/projects/grice-pilot/wizard/{sid}/back"), Some("ann1"), None).await
    );
    let answer = format!("/projects/grice-pilot/wizard/{sid}/answer");
    let done = app.post(&answer, "ann1", json!({"answer": false})).await;
    assert_eq!(done.body["status"], "finished", "{}", done.body);
    case!("answer after finish", S::CONFLICT, "FINISHED", app.post(&answer, "ann1", json!({"answer": true})).await);
    case!(
        "unknown session",
        S::NOT_FOUND,
        "SESSION_NOT_FOUND",
        app.post("/projects/grice-pilot/wizard/nope/answer", "ann1", json!({"answer": true})).await
    );
    let s = app.post("/projects/grice-pilot/wizard/start", "ann2", start("quantity")).await;
    let sid = s.body["session_id"].as_str().unwrap_or_default().to_string();
    app.clock.advance(TTL_MS + 1);
    case!(
        "expired session",
        S::GONE,
        "SESSION_EXPIRED",
        app.post(&format!("/projects/grice-pilot/wizard/{sid}/answer"), "ann2", json!({"answer": true})).await
    );

    // View Previous.
    case!(
        "previous with unknown option",
        S::NOT_FOUND,
        "OPTION_NOT_FOUND",
        app.get("/projects/cascade/previous?category=relevance&option=maybe", "ann1").await
    );
    case!(
        "previous without option",
        S::BAD_REQUEST,
        "SCHEMA_ERROR",
        app.get("/projects/cascade/previous?category=relevance", "ann1").await
    );
    case!(
        "previous with no prior use",
        S::NO_CONTENT,
        "",
        app.get("/projects/cascade/previous?category=relevance&option=no", "ann1").await
    );

    // Failed write.
    app.state.project("cascade").unwrap().write().fail_next_append();
    case!(
        "journal write failure",
        S::INTERNAL_SERVER_ERROR,
        "INTERNAL",
        app.put("/projects/cascade/labels", "ann2", label("conv-001", &human, "relevance", "yes", None)).await
    );
    cases
}
