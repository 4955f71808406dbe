use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;
use xrguide_core::harness::{Scenario, ScriptAction};
use xrguide_core::media::AssetCache;
use xrguide_core::session::{ClientMessage, DepthRef, Envelope};

struct Server {
    child: Child,
    addr: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start(fixtures: &Path) -> Server {
    let mut child = Command::new(env!("CARGO_BIN_EXE_xrguide"))
        .args(["serve", "--addr", "127.0.0.1:0", "--fixtures"])
        .arg(fixtures)
        .env_remove("XRG_GATEWAY_MODE")
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("{line:?}")).to_string();
    Server { child, addr }
}

fn coffee() -> (Scenario, std::path::PathBuf) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/coffee/scenario.json");
    Scenario::load(&path).unwrap()
}

fn post_blob(addr: &str, bytes: &[u8]) -> String {
    let mut resp = ureq::post(format!("http://{addr}/blobs")).send(bytes).unwrap();
    assert_eq!(resp.status().as_u16(), 201);
    let v: Value = resp.body_mut().read_json().unwrap();
    assert_eq!(v["size"], bytes.len());
    v["digest"].as_str().unwrap().to_string()
}

#[test]
fn health_and_blobs() {
    let (_, base) = coffee();
    let server = start(&base.join("calls.jsonl"));
    let addr = &server.addr;

    let v: Value = ureq::get(format!("http://{addr}/health")).call().unwrap().body_mut().read_json().unwrap();
    assert_eq!(v["status"], "ok");
    assert_eq!(v["protocol"], 1);

    let digest = post_blob(addr, b"P5\n1 1\n255\n\x7f");
    let mut resp = ureq::get(format!("http://{addr}/blobs/{digest}")).call().unwrap();
    assert_eq!(resp.body_mut().read_to_vec().unwrap(), b"P5\n1 1\n255\n\x7f");
    assert_eq!(post_blob(addr, b"P5\n1 1\n255\n\x7f"), digest);

    let status = |path: &str| match ureq::get(format!("http://{addr}{path}")).call() {
        Err(ureq::Error::StatusCode(code)) => code,
        other => panic!("{path}: {other:?}"),
    };
    assert_eq!(status("/blobs/not-hex"), 400);
    assert_eq!(status(&format!("/blobs/{}", "0".repeat(64))), 404);
}

#[tokio::test(flavor = "multi_thread")]
async fn websocket_session_replays_the_coffee_task() {
    let (scenario, base) = coffee();
    let server = start(&base.join("calls.jsonl"));
    let addr = server.addr.clone();
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();

    // Build frames locally and upload their blobs.
    let local = AssetCache::in_memory();
    let mut messages = vec![ClientMessage::StartTask { prompt: scenario.prompt.clone() }];
    for action in &scenario.script {
        messages.push(match action {
            ScriptAction::SendFrame { frame } => {
                let input = scenario.frames[*frame].upload(&local, *frame as f64).unwrap();
                let mut blobs = vec![input.image.clone().unwrap()];
                if let Some(DepthRef::Blob(d)) = &input.depth {
                    blobs.push(d.clone());
                }
                for d in blobs {
                    let bytes = local.get(&d).unwrap();
                    let a = addr.clone();
                    let uploaded = tokio::task::spawn_blocking(move || post_blob(&a, &bytes)).await.unwrap();
                    assert_eq!(uploaded, d.as_str());
                }
                ClientMessage::FrameUpdate(input)
            }
            ScriptAction::Verify => ClientMessage::VerifyRequest,
            other => panic!("coffee does not use {other:?}"),
        });
    }
    messages.push(ClientMessage::EndSession);

    ws.send(Message::text(r#"{"type": "Teleport", "seq": 1}"#)).await.unwrap();
    for (i, m) in messages.into_iter().enumerate() {
        let env = Envelope::new("ws-coffee", i as u64 + 1, m);
        ws.send(Message::text(serde_json::to_string(&env).unwrap())).await.unwrap();
    }

    let mut received: Vec<Value> = Vec::new();
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(20), ws.next()).await.unwrap().unwrap().unwrap();
        let Message::Text(t) = msg else { continue };
        let v: Value = serde_json::from_str(&t).unwrap();
        let done = v["type"] == "SessionClosed";
        received.push(v);
        if done {
            break;
        }
    }

    assert_eq!(received[0]["type"], "Error");
    assert_eq!(received[0]["payload"]["code"], "PayloadInvalid");
    let rest = &received[1..];
    assert!(rest.iter().all(|m| m["session_id"] == "ws-coffee"));
    assert!(rest.iter().all(|m| m["type"] != "Error"), "{rest:#?}");
    let plan = rest.iter().find(|m| m["type"] == "PlanReady").unwrap();
    assert_eq!(plan["payload"]["steps"].as_array().unwrap().len(), 3);
    let verdicts: Vec<Value> = rest
        .iter()
        .filter(|m| m["type"] == "VerificationResult")
        .map(|m| json!([m["payload"]["step_index"], m["payload"]["success"]]))
        .collect();
    assert_eq!(verdicts, vec![json!([0, false]), json!([0, true]), json!([1, true]), json!([2, true])]);
    let cues: Vec<&Value> = rest.iter().filter(|m| m["type"] == "AudioCue").map(|m| &m["payload"]["cue"]).collect();
    assert_eq!(cues, vec!["Error", "Correct", "Correct", "Correct"]);
    assert!(rest.iter().any(|m| m["type"] == "TaskComplete"));
    let batches = rest.iter().filter(|m| m["type"] == "DirectiveBatch").count();
    assert!(batches >= 4, "{batches}");
}
