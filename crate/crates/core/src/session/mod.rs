//! Sessions: the wire protocol, the per-session engine that drives planning,
//! localization, rendering and verification, the event log and its replay.

mod engine;
mod events;
mod frames;
mod hub;
mod protocol;
mod replay;

use thiserror::Error;

pub use engine::{system_clock, Clock, EngineServices, Phase, SessionEngine};
pub use events::{
    parse_event_lines, read_event_log, ErrorCode, EventBody, EventLog, RevisionReason, SessionEvent, StepView,
};
pub use frames::{decode_depth_blob, encode_depth_blob, resolve_frame, DefaultCamera};
pub use hub::{GatewayFactory, ReplayFactory, SessionHub};
pub use protocol::{ClientMessage, DepthRef, Envelope, FrameInput, ServerMessage, PROTOCOL_VERSION};
pub use replay::{input_message, replay_session, ReplayOutcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("event log is corrupt at line {line}")]
    LogCorrupt { line: usize },
    #[error("replay diverged at event {seq}: {detail}")]
    FixtureMismatch { seq: u64, detail: String },
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
}
