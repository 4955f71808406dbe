#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use serde_json::json;
use xrguide_core::gateway::{Gateway, ProfileRouting, ScriptedReply, ScriptedTransport};
use xrguide_core::media::{AssetCache, MediaServices};
use xrguide_core::prompt::PromptKind;
use xrguide_core::session::{ClientMessage, EngineServices, Envelope, FrameInput, ServerMessage};

pub const GOAL: &str = "How do I make a cup of coffee?";

pub fn plan_doc() -> String {
    json!({
        "goal": "Make a cup of coffee",
        "steps": ["Place the mug under the spout", "Press the brew button", "Add milk"],
        "plannerResponse": {
            "next": "Place the mug under the spout",
            "check": "",
            "success": false,
            "viz": {
                "objectViz": "Outline", "actionViz": "Arrow", "actionType": ["translation"],
                "needsTranslation": true, "needsRotation": false,
                "waypoints": [{"type": "target", "objectName": "mug"}, {"type": "endtarget", "objectName": "spout"}]
            }
        },
        "stepDomains": [
            {"referent": "Real", "action": "Real"},
            {"referent": "Real", "action": "Real"},
            {"referent": "Real", "action": "Real"}
        ]
    })
    .to_string()
}

pub fn reply(kind: PromptKind, text: impl Into<String>) -> ScriptedReply {
    ScriptedReply { kind, text: text.into(), latency: Some(1.25) }
}

pub fn coffee_script() -> Vec<ScriptedReply> {
    let mug = r#"[{"type": "starttarget", "name": "mug", "pos": [100, 400, 250, 600]},
                  {"type": "endtarget", "name": "spout", "pos": [450, 300, 550, 450]}]"#;
    let next_viz = json!({
        "next": "Press the brew button", "check": "", "success": true,
        "viz": {"objectViz": "Outline", "actionViz": "Gesture", "actionType": ["press"],
                "needsTranslation": false, "needsRotation": false,
                "waypoints": [{"type": "target", "objectName": "brew button"}]}
    });
    vec![
        reply(PromptKind::InitialPlan, format!("```json\n{}\n```", plan_doc())),
        reply(PromptKind::TransformLocalize, mug),
        reply(PromptKind::DuringTask, r#"{"next": "", "check": "mug not under the spout yet", "success": false}"#),
        reply(PromptKind::TransformLocalize, mug),
        reply(PromptKind::DuringTask, next_viz.to_string()),
        reply(
            PromptKind::TransformLocalize,
            r#"{"type": "object", "name": "brew button", "pos": [600, 200, 660, 260]}"#,
        ),
        reply(PromptKind::DuringTask, r#"{"success": true}"#),
    ]
}

pub fn services(cache: Arc<AssetCache>) -> Arc<EngineServices> {
    Arc::new(EngineServices::new(Arc::new(MediaServices::offline(cache))).unwrap())
}

pub fn record_gateway(replies: Vec<ScriptedReply>, cache: Arc<AssetCache>, fixture: &Path) -> Gateway {
    Gateway::record(Arc::new(ScriptedTransport::new(replies)), ProfileRouting::offline(), cache, fixture).unwrap()
}

pub fn frame(tag: &str) -> FrameInput {
    use base64::Engine as _;
    FrameInput {
        image: None,
        image_base64: Some(base64::engine::general_purpose::STANDARD.encode(format!("frame {tag}"))),
        width: 640,
        height: 480,
        intrinsics: None,
        pose: None,
        depth: Some(xrguide_core::session::DepthRef::Constant(0.8)),
        timestamp: 0.0,
    }
}

pub fn coffee_messages() -> Vec<ClientMessage> {
    vec![
        ClientMessage::StartTask { prompt: GOAL.into() },
        ClientMessage::FrameUpdate(frame("a")),
        ClientMessage::VerifyRequest,
        ClientMessage::VerifyRequest,
        ClientMessage::RegisterSignal { step_index: 2, token: "milk-added".into() },
        ClientMessage::VerifyRequest,
        ClientMessage::FireSignal { token: "milk-added".into() },
    ]
}

pub fn types(msgs: &[Envelope<ServerMessage>]) -> Vec<String> {
    msgs.iter().map(|m| serde_json::to_value(&m.message).unwrap()["type"].as_str().unwrap().to_string()).collect()
}
