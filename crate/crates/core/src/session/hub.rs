use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;

use super::engine::{Clock, EngineServices, SessionEngine};
use super::events::{ErrorCode, EventLog};
use super::protocol::{ClientMessage, Envelope, ServerMessage};
use crate::gateway::{Gateway, GatewayError, ProfileRouting, ReplayPool};
use crate::media::AssetCache;

/// Builds one gateway per session.
pub trait GatewayFactory: Send + Sync {
    fn create(&self, session_id: &str) -> Result<Gateway, GatewayError>;
}

impl<F> GatewayFactory for F
where
    F: Fn(&str) -> Result<Gateway, GatewayError> + Send + Sync,
{
    fn create(&self, session_id: &str) -> Result<Gateway, GatewayError> {
        self(session_id)
    }
}

/// Replay gateways over one shared fixture pool, each with its own cursor.
pub struct ReplayFactory {
    pub pool: Arc<ReplayPool>,
    pub routing: ProfileRouting,
}

impl GatewayFactory for ReplayFactory {
    fn create(&self, _session_id: &str) -> Result<Gateway, GatewayError> {
        Ok(Gateway::replay(Arc::clone(&self.pool), self.routing.clone()))
    }
}

fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

/// All live sessions of a server. Sessions are independent: each has its own
/// lock, gateway and event log, so one session's work never blocks or
/// touches another's.
pub struct SessionHub {
    services: Arc<EngineServices>,
    factory: Arc<dyn GatewayFactory>,
    sessions: Mutex<HashMap<String, Arc<Mutex<SessionEngine>>>>,
    log_dir: Option<PathBuf>,
    clock: Option<Clock>,
    counter: AtomicU64,
}

impl SessionHub {
    pub fn new(services: Arc<EngineServices>, factory: Arc<dyn GatewayFactory>) -> Self {
        SessionHub {
            services,
            factory,
            sessions: Mutex::default(),
            log_dir: None,
            clock: None,
            counter: AtomicU64::new(0),
        }
    }

    /// Writes each session's events to `<dir>/<session_id>.jsonl`.
    pub fn with_log_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.log_dir = Some(dir.into());
        self
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = Some(clock);
        self
    }

    pub fn services(&self) -> &Arc<EngineServices> {
        &self.services
    }

    /// Blob store shared by frames, depth grids, media and icons.
    pub fn cache(&self) -> &Arc<AssetCache> {
        &self.services.media.cache
    }

    pub fn session(&self, id: &str) -> Option<Arc<Mutex<SessionEngine>>> {
        self.sessions.lock().get(id).cloned()
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.lock().keys().cloned().collect();
        ids.sort();
        ids
    }

    fn reject(id: &str, code: ErrorCode, detail: String) -> Vec<Envelope<ServerMessage>> {
        vec![Envelope::new(id, 0, ServerMessage::Error { code, detail })]
    }

    fn open(&self, requested: &str) -> Result<Arc<Mutex<SessionEngine>>, (ErrorCode, String)> {
        let id = if requested.is_empty() {
            format!("s{:04}", self.counter.fetch_add(1, Ordering::Relaxed))
        } else if valid_session_id(requested) {
            requested.to_string()
        } else {
            return Err((ErrorCode::PayloadInvalid, format!("invalid session id {requested:?}")));
        };
        let gateway = self.factory.create(&id).map_err(|e| (ErrorCode::ModelError, e.to_string()))?;
        let log = match &self.log_dir {
            Some(dir) => EventLog::create(&dir.join(format!("{id}.jsonl")))
                .map_err(|e| (ErrorCode::PayloadInvalid, format!("cannot open event log: {e}")))?,
            None => EventLog::in_memory(),
        };
        let mut engine = SessionEngine::new(id.clone(), gateway, Arc::clone(&self.services), log);
        if let Some(c) = &self.clock {
            engine = engine.with_clock(Arc::clone(c));
        }
        let engine = Arc::new(Mutex::new(engine));
        self.sessions.lock().insert(id, Arc::clone(&engine));
        Ok(engine)
    }

    /// Routes a client message to its session. A `StartTask` for an unknown
    /// (or empty) session id opens a new session.
    pub fn handle(&self, env: Envelope<ClientMessage>) -> Vec<Envelope<ServerMessage>> {
        let existing = self.session(&env.session_id);
        let engine = match (existing, &env.message) {
            (Some(e), _) => e,
            (None, ClientMessage::StartTask { .. }) => match self.open(&env.session_id) {
                Ok(e) => e,
                Err((code, detail)) => return Self::reject(&env.session_id, code, detail),
            },
            (None, m) => {
                let detail = format!("{} for unknown session {:?}", m.type_name(), env.session_id);
                return Self::reject(&env.session_id, ErrorCode::UnknownSession, detail);
            }
        };
        let mut guard = engine.lock();
        guard.handle(env)
    }
}
