use std::collections::BTreeSet;
use std::sync::Arc;

use super::engine::{EngineServices, SessionEngine};
use super::events::{EventBody, EventLog, SessionEvent};
use super::protocol::{ClientMessage, DepthRef, Envelope, FrameInput};
use super::SessionError;
use crate::gateway::Gateway;
use crate::spatial::DepthMap;

/// The client message an input event records.
pub fn input_message(event: &SessionEvent) -> Option<ClientMessage> {
    Some(match &event.body {
        EventBody::SessionStarted { prompt, .. } => ClientMessage::StartTask { prompt: prompt.clone() },
        EventBody::FrameReceived { frame, depth_blob } => {
            let depth = match (&frame.depth, depth_blob) {
                (_, Some(d)) => DepthRef::Blob(d.clone()),
                (DepthMap::Constant(c), None) => DepthRef::Constant(*c),
                (DepthMap::Grid(_), None) => return None,
            };
            ClientMessage::FrameUpdate(FrameInput {
                image: frame.image.clone(),
                image_base64: None,
                width: frame.width,
                height: frame.height,
                intrinsics: Some(frame.intrinsics),
                pose: Some(frame.pose),
                depth: Some(depth),
                timestamp: frame.timestamp,
            })
        }
        EventBody::VerifyRequested => ClientMessage::VerifyRequest,
        EventBody::VoiceQuery { text } => ClientMessage::VoiceQuery { text: text.clone() },
        EventBody::SignalRegistered { step_index, token } => {
            ClientMessage::RegisterSignal { step_index: *step_index, token: token.clone() }
        }
        EventBody::SignalFired { token } => ClientMessage::FireSignal { token: token.clone() },
        EventBody::SkipCommand { index, reason } => ClientMessage::SkipStep { index: *index, reason: reason.clone() },
        EventBody::SessionClosed => ClientMessage::EndSession,
        _ => return None,
    })
}

/// Events that can be reproduced: everything caused by a message that left
/// an input record. Rejected messages (bad seq, bad payload) leave none.
fn reproducible(events: &[SessionEvent]) -> Vec<&SessionEvent> {
    let recorded: BTreeSet<Option<u64>> = events.iter().filter(|e| e.body.is_input()).map(|e| e.client_seq).collect();
    events.iter().filter(|e| recorded.contains(&e.client_seq)).collect()
}

pub struct ReplayOutcome {
    pub engine: SessionEngine,
}

impl ReplayOutcome {
    pub fn events(&self) -> &[SessionEvent] {
        self.engine.events()
    }
}

/// Re-feeds a log's inputs to a fresh engine and checks that it produces the
/// same events (timestamps and sequence numbers aside). Frame and depth
/// blobs must be present in the services' asset cache.
pub fn replay_session(
    events: &[SessionEvent],
    gateway: Gateway,
    services: Arc<EngineServices>,
) -> Result<ReplayOutcome, SessionError> {
    let id = events
        .iter()
        .find_map(|e| match &e.body {
            EventBody::SessionStarted { session_id, .. } => Some(session_id.clone()),
            _ => None,
        })
        .unwrap_or_else(|| "replay".to_string());
    let mut engine =
        SessionEngine::new(id.clone(), gateway, services, EventLog::in_memory()).with_clock(Arc::new(|| 0.0));
    for (i, event) in events.iter().enumerate().filter(|(_, e)| e.body.is_input()) {
        let msg = input_message(event).ok_or_else(|| SessionError::FixtureMismatch {
            seq: event.seq,
            detail: "input event cannot be re-sent".into(),
        })?;
        let seq = event.client_seq.unwrap_or(i as u64);
        engine.handle(Envelope::new(id.clone(), seq, msg));
    }

    let expected = reproducible(events);
    let produced = reproducible(engine.events());
    for (k, want) in expected.iter().enumerate() {
        let Some(got) = produced.get(k) else {
            return Err(SessionError::FixtureMismatch {
                seq: want.seq,
                detail: format!("replay ended before {}", want.body.name()),
            });
        };
        if got.body != want.body || got.client_seq != want.client_seq {
            return Err(SessionError::FixtureMismatch {
                seq: want.seq,
                detail: format!("expected {}, replay produced {}", want.body.name(), describe(got)),
            });
        }
    }
    if let Some(extra) = produced.get(expected.len()) {
        return Err(SessionError::FixtureMismatch {
            seq: extra.seq,
            detail: format!("replay produced an extra {}", describe(extra)),
        });
    }
    Ok(ReplayOutcome { engine })
}

fn describe(e: &SessionEvent) -> String {
    match &e.body {
        EventBody::Error { code, detail } => format!("Error({code:?}: {detail})"),
        other => other.name().to_string(),
    }
}
