//! Append-only session history. Input events record what a client sent;
//! output events record what the server answered, and each output event maps
//! to at most one wire message.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::protocol::ServerMessage;
use super::SessionError;
use crate::digest::Digest;
use crate::fsm::AudioCueKind;
use crate::plan::{viz_to_value, PlanStep, PlanWarning, StepId, StepOrigin, StepStatus, StepType};
use crate::prompt::PromptKind;
use crate::render::DirectiveBatch;
use crate::spatial::CameraFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorCode {
    UnknownSession,
    SessionExists,
    OutOfOrderSeq,
    PayloadInvalid,
    NoFrame,
    NotExecuting,
    AlreadyStarted,
    SessionClosed,
    PlanFailed,
    ModelError,
    LocalizationFailed,
    VerificationFailed,
    SubPlanFailed,
    UnknownSignal,
    InvalidStep,
    ReplayMiss,
}

/// A plan step as shown to clients and stored in logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepView {
    pub id: StepId,
    pub index: usize,
    pub instruction: String,
    pub verification_rule: String,
    pub step_type: StepType,
    pub status: StepStatus,
    pub origin: StepOrigin,
    /// The visualization in planner JSON form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub viz: Option<Value>,
}

impl From<&PlanStep> for StepView {
    fn from(s: &PlanStep) -> Self {
        StepView {
            id: s.id,
            index: s.index,
            instruction: s.instruction.clone(),
            verification_rule: s.verification_rule.clone(),
            step_type: s.step_type,
            status: s.status,
            origin: s.origin,
            viz: s.viz.as_ref().map(viz_to_value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevisionReason {
    Failure,
    Voice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventBody {
    // Inputs.
    SessionStarted {
        session_id: String,
        prompt: String,
    },
    FrameReceived {
        frame: CameraFrame,
        depth_blob: Option<Digest>,
    },
    VerifyRequested,
    VoiceQuery {
        text: String,
    },
    SignalRegistered {
        step_index: usize,
        token: String,
    },
    SignalFired {
        token: String,
    },
    SkipCommand {
        index: usize,
        reason: String,
    },
    SessionClosed,

    // Outputs and diagnostics.
    ModelCalled {
        prompt: PromptKind,
        context_hash: Digest,
        profile: Option<String>,
        latency: Option<f64>,
        response: Option<Digest>,
        error: Option<String>,
    },
    PlanReady {
        goal: String,
        steps: Vec<StepView>,
        active_index: Option<usize>,
        warnings: Vec<PlanWarning>,
    },
    DirectiveBatchSent {
        batch: DirectiveBatch,
    },
    VerificationResult {
        step_index: usize,
        success: bool,
        check: String,
        signal: bool,
    },
    AudioCueSent {
        cue: AudioCueKind,
    },
    VizRevised {
        step_index: usize,
        viz: Value,
        reason: RevisionReason,
    },
    SubPlanInserted {
        parent: usize,
        substeps: Vec<StepView>,
    },
    StepsSkipped {
        indices: Vec<usize>,
        reason: String,
    },
    VoiceAnswer {
        text: String,
        error: Option<String>,
    },
    QueryQueued {
        text: String,
    },
    TaskComplete,
    Error {
        code: ErrorCode,
        detail: String,
    },
}

impl EventBody {
    pub fn name(&self) -> &'static str {
        use EventBody as E;
        match self {
            E::SessionStarted { .. } => "SessionStarted",
            E::FrameReceived { .. } => "FrameReceived",
            E::VerifyRequested => "VerifyRequested",
            E::VoiceQuery { .. } => "VoiceQuery",
            E::SignalRegistered { .. } => "SignalRegistered",
            E::SignalFired { .. } => "SignalFired",
            E::SkipCommand { .. } => "SkipCommand",
            E::SessionClosed => "SessionClosed",
            E::ModelCalled { .. } => "ModelCalled",
            E::PlanReady { .. } => "PlanReady",
            E::DirectiveBatchSent { .. } => "DirectiveBatchSent",
            E::VerificationResult { .. } => "VerificationResult",
            E::AudioCueSent { .. } => "AudioCueSent",
            E::VizRevised { .. } => "VizRevised",
            E::SubPlanInserted { .. } => "SubPlanInserted",
            E::StepsSkipped { .. } => "StepsSkipped",
            E::VoiceAnswer { .. } => "VoiceAnswer",
            E::QueryQueued { .. } => "QueryQueued",
            E::TaskComplete => "TaskComplete",
            E::Error { .. } => "Error",
        }
    }

    /// Whether the event records client input (and is re-fed on replay).
    pub fn is_input(&self) -> bool {
        use EventBody as E;
        matches!(
            self,
            E::SessionStarted { .. }
                | E::FrameReceived { .. }
                | E::VerifyRequested
                | E::VoiceQuery { .. }
                | E::SignalRegistered { .. }
                | E::SignalFired { .. }
                | E::SkipCommand { .. }
                | E::SessionClosed
        )
    }

    /// The wire message announcing this event, if any.
    pub fn to_message(&self) -> Option<ServerMessage> {
        use EventBody as E;
        Some(match self {
            E::PlanReady { goal, steps, active_index, .. } => {
                ServerMessage::PlanReady { goal: goal.clone(), steps: steps.clone(), active_index: *active_index }
            }
            E::DirectiveBatchSent { batch } => ServerMessage::DirectiveBatch(batch.clone()),
            E::VerificationResult { step_index, success, check, .. } => {
                ServerMessage::VerificationResult { step_index: *step_index, success: *success, check: check.clone() }
            }
            E::AudioCueSent { cue } => ServerMessage::AudioCue { cue: *cue },
            E::SubPlanInserted { parent, substeps } => {
                ServerMessage::SubPlanInserted { parent: *parent, substeps: substeps.clone() }
            }
            E::StepsSkipped { indices, reason } => {
                ServerMessage::StepsSkipped { indices: indices.clone(), reason: reason.clone() }
            }
            E::VoiceAnswer { text, .. } => ServerMessage::Answer { text: text.clone() },
            E::QueryQueued { text } => ServerMessage::QueryQueued { text: text.clone() },
            E::TaskComplete => ServerMessage::TaskComplete,
            E::SessionClosed => ServerMessage::SessionClosed,
            E::Error { code, detail } => ServerMessage::Error { code: *code, detail: detail.clone() },
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    /// Seconds since the Unix epoch.
    pub timestamp: f64,
    /// Sequence number of the client message that caused the event.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_seq: Option<u64>,
    #[serde(flatten)]
    pub body: EventBody,
}

/// In-memory event history with an optional JSONL file behind it. Each
/// event is flushed to the file before it is handed back to the caller.
#[derive(Debug, Default)]
pub struct EventLog {
    events: Vec<SessionEvent>,
    writer: Option<BufWriter<File>>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn create(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = File::create(path)?;
        Ok(EventLog { events: Vec::new(), writer: Some(BufWriter::new(file)) })
    }

    pub fn append(&mut self, event: SessionEvent) -> std::io::Result<&SessionEvent> {
        if let Some(w) = &mut self.writer {
            serde_json::to_writer(&mut *w, &event)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        self.events.push(event);
        Ok(self.events.last().expect("just pushed"))
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Reads a JSONL event log; the first unparsable line is reported 1-based.
pub fn read_event_log(path: &Path) -> Result<Vec<SessionEvent>, SessionError> {
    let file = File::open(path).map_err(|e| SessionError::Io(format!("{}: {e}", path.display())))?;
    parse_event_lines(BufReader::new(file))
}

pub fn parse_event_lines(reader: impl BufRead) -> Result<Vec<SessionEvent>, SessionError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| SessionError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line).map_err(|_| SessionError::LogCorrupt { line: i + 1 })?;
        out.push(ev);
    }
    Ok(out)
}
