//! Wire messages. Every message travels in an [`Envelope`]:
//! `{"type": ..., "session_id": ..., "seq": ..., "payload": {...}}`.

use serde::{Deserialize, Serialize};

use super::events::{ErrorCode, StepView};
use crate::digest::Digest;
use crate::fsm::AudioCueKind;
use crate::render::DirectiveBatch;
use crate::spatial::{Intrinsics, Pose};

/// Wire protocol version, reported by the server.
pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<M> {
    /// Empty on a `StartTask` that asks the server to pick an id.
    #[serde(default)]
    pub session_id: String,
    /// Strictly increasing per session and sender.
    pub seq: u64,
    #[serde(flatten)]
    pub message: M,
}

impl<M> Envelope<M> {
    pub fn new(session_id: impl Into<String>, seq: u64, message: M) -> Self {
        Envelope { session_id: session_id.into(), seq, message }
    }
}

/// Depth for a frame: a constant plane or a previously uploaded grid blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthRef {
    Constant(f64),
    Blob(Digest),
}

/// A scene frame as sent by a client. Intrinsics, pose and depth may be left
/// out; the server then assumes a default camera at the world origin looking
/// at a plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameInput {
    /// Digest of an image uploaded to the blob endpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<Digest>,
    /// Inline image bytes, base64; stored and replaced by their digest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_base64: Option<String>,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsics: Option<Intrinsics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<Pose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<DepthRef>,
    #[serde(default)]
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload")]
pub enum ClientMessage {
    StartTask {
        prompt: String,
    },
    FrameUpdate(FrameInput),
    VerifyRequest,
    VoiceQuery {
        text: String,
    },
    /// Completion signal from instrumented software.
    FireSignal {
        token: String,
    },
    /// Lets `token` complete the step at `step_index` without a model call.
    RegisterSignal {
        step_index: usize,
        token: String,
    },
    SkipStep {
        index: usize,
        #[serde(default)]
        reason: String,
    },
    EndSession,
}

impl ClientMessage {
    pub fn type_name(&self) -> &'static str {
        match self {
            ClientMessage::StartTask { .. } => "StartTask",
            ClientMessage::FrameUpdate(_) => "FrameUpdate",
            ClientMessage::VerifyRequest => "VerifyRequest",
            ClientMessage::VoiceQuery { .. } => "VoiceQuery",
            ClientMessage::FireSignal { .. } => "FireSignal",
            ClientMessage::RegisterSignal { .. } => "RegisterSignal",
            ClientMessage::SkipStep { .. } => "SkipStep",
            ClientMessage::EndSession => "EndSession",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload")]
pub enum ServerMessage {
    PlanReady {
        goal: String,
        steps: Vec<StepView>,
        active_index: Option<usize>,
    },
    DirectiveBatch(DirectiveBatch),
    VerificationResult {
        step_index: usize,
        success: bool,
        check: String,
    },
    AudioCue {
        cue: AudioCueKind,
    },
    SubPlanInserted {
        parent: usize,
        substeps: Vec<StepView>,
    },
    StepsSkipped {
        indices: Vec<usize>,
        reason: String,
    },
    Answer {
        text: String,
    },
    /// A voice query arrived before the plan was ready; it is answered later.
    QueryQueued {
        text: String,
    },
    TaskComplete,
    SessionClosed,
    Error {
        code: ErrorCode,
        detail: String,
    },
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn envelope_layout() {
        let env = Envelope::new("s1", 3, ClientMessage::VoiceQuery { text: "why?".into() });
        let v = serde_json::to_value(&env).unwrap();
        assert_eq!(v, json!({"session_id": "s1", "seq": 3, "type": "VoiceQuery", "payload": {"text": "why?"}}));
        let back: Envelope<ClientMessage> = serde_json::from_value(v).unwrap();
        assert_eq!(back, env);

        let unit: Envelope<ClientMessage> =
            serde_json::from_value(json!({"session_id": "s1", "seq": 4, "type": "VerifyRequest"})).unwrap();
        assert_eq!(unit.message, ClientMessage::VerifyRequest);
    }

    #[test]
    fn frame_update_minimal() {
        let raw = json!({"seq": 1, "session_id": "a", "type": "FrameUpdate",
            "payload": {"width": 64, "height": 48, "depth": {"constant": 0.8}}});
        let env: Envelope<ClientMessage> = serde_json::from_value(raw).unwrap();
        match env.message {
            ClientMessage::FrameUpdate(f) => {
                assert_eq!(f.depth, Some(DepthRef::Constant(0.8)));
                assert!(f.intrinsics.is_none() && f.pose.is_none());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_type_is_rejected() {
        let raw = json!({"seq": 1, "session_id": "a", "type": "Teleport", "payload": {}});
        assert!(serde_json::from_value::<Envelope<ClientMessage>>(raw).is_err());
    }
}
