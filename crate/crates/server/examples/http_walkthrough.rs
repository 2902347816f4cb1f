//! Starts the API on a free local port and drives one labeling session over
//! plain HTTP: create a project, label, run a wizard, check status.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};

use cal_core::fixtures;
use cal_core::store::Store;
use cal_server::{router, AppState};

fn call(addr: SocketAddr, method: &str, path: &str, who: &str, body: Option<&str>) -> (u16, String) {
    let mut stream = TcpStream::connect(addr).unwrap();
    let body = body.unwrap_or("");
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nX-Annotator-Id: {who}\r\nContent-Type: application/json\r\n\
         Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = String::new();
    stream.read_to_string(&mut raw).unwrap();
    let status = raw[9..12].parse().unwrap();
    let payload = raw.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    (status, payload)
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("sample-transcripts.json"), fixtures::SAMPLE_TRANSCRIPTS_JSON).unwrap();
    let state = AppState::new(Store::open(dir.path()).unwrap());

    let rt = tokio::runtime::Runtime::new().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    rt.spawn(async move { axum::serve(listener, router(state, None)).await.unwrap() });
    println!("serving on http://{addr}");

    let show = |label: &str, (status, body): (u16, String)| {
        let pretty = serde_json::from_str::<serde_json::Value>(&body)
            .map(|v| serde_json::to_string_pretty(&v).unwrap())
            .unwrap_or(body);
        let short: String = pretty.lines().take(12).collect::<Vec<_>>().join("\n");
        println!("\n{label} -> {status}\n{short}");
    };

    show("GET /healthz", call(addr, "GET", "/healthz", "lead", None));
    show(
        "POST /projects",
        call(addr, "POST", "/projects", "lead", Some(fixtures::GRICE_PROJECT_JSON)),
    );
    let label = r#"{"example":{"conversation_id":"conv-001","utterance_id":"conv-001#1"},
                    "category_id":"manner","value":{"single":"yes"}}"#;
    show("PUT /labels", call(addr, "PUT", "/projects/grice-pilot/labels", "ann1", Some(label)));
    show(
        "PUT /labels (stale)",
        call(addr, "PUT", "/projects/grice-pilot/labels", "ann1", Some(label)),
    );

    let start = r#"{"example":{"conversation_id":"conv-001","utterance_id":"conv-001#1"},"category_id":"relevance"}"#;
    let (_, body) = call(addr, "POST", "/projects/grice-pilot/wizard/start", "ann1", Some(start));
    let session: serde_json::Value = serde_json::from_str(&body).unwrap();
    println!("\nwizard asks: {}", session["question"]);
    let id = session["session_id"].as_str().unwrap();
    let answer = format!("/projects/grice-pilot/wizard/{id}/answer");
    call(addr, "POST", &answer, "ann1", Some(r#"{"answer":true}"#));
    let (_, body) = call(addr, "POST", &answer, "ann1", Some(r#"{"answer":true}"#));
    let done: serde_json::Value = serde_json::from_str(&body).unwrap();
    println!("wizard result: {} (notify {})", done["result"]["option_id"], done["result"]["notify"]);

    let (_, body) = call(addr, "GET", "/projects/grice-pilot/status", "ann1", None);
    let status: serde_json::Value = serde_json::from_str(&body).unwrap();
    println!(
        "\nann1 progress {} ({}), agreement visible: {}",
        status["progress"][0]["fraction"], status["progress"][0]["percent"], status["agreement_visible"]
    );
}
