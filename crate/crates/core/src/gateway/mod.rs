//! The single choke point for model calls: live HTTP, record (live plus a
//! JSONL fixture trail) and replay (recorded answers only, never the
//! network).

mod fixture;
mod metrics;
mod transport;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::Digest;
use crate::media::AssetCache;
use crate::prompt::{PromptKind, RenderedPrompt};

pub use fixture::{read_fixture_dir, read_records, CallRecord, FixtureWriter};
pub use metrics::{LatencySummary, Metrics};
pub use transport::{HttpTransport, ModelTransport, ScriptedReply, ScriptedTransport, TransportReply};

pub const ENV_ENDPOINT: &str = "XRG_MODEL_ENDPOINT";
pub const ENV_KEY: &str = "XRG_MODEL_KEY";
pub const ENV_MODE: &str = "XRG_GATEWAY_MODE";
pub const ENV_FIXTURE_DIR: &str = "XRG_FIXTURE_DIR";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("{kind} call timed out after {after} s")]
    Timeout { kind: PromptKind, after: f64 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no recorded answer for context {0}")]
    ReplayMiss(Digest),
    #[error("attachment {0} is not in the asset cache")]
    MissingAttachment(Digest),
    #[error("fixture error: {0}")]
    Fixture(String),
    #[error("gateway misconfigured: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    Live,
    Record,
    Replay,
}

impl FromStr for GatewayMode {
    type Err = GatewayError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Ok(GatewayMode::Live),
            "record" => Ok(GatewayMode::Record),
            "replay" => Ok(GatewayMode::Replay),
            other => Err(GatewayError::Config(format!("unknown gateway mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub name: String,
    pub endpoint: String,
    /// Seconds; always positive.
    pub timeout: f64,
}

impl ModelProfile {
    pub fn new(name: impl Into<String>, endpoint: impl Into<String>, timeout: f64) -> Result<Self, GatewayError> {
        if timeout.is_nan() || timeout <= 0.0 {
            return Err(GatewayError::Config(format!("timeout must be positive, got {timeout}")));
        }
        Ok(ModelProfile { name: name.into(), endpoint: endpoint.into(), timeout })
    }
}

/// Which profile serves which prompt kind: verification, relevance and voice
/// on the fast profile; planning, localization and sub-planning on the
/// strong one. Individual kinds can be overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRouting {
    pub fast: ModelProfile,
    pub strong: ModelProfile,
    #[serde(default)]
    pub overrides: BTreeMap<PromptKind, ModelProfile>,
}

impl ProfileRouting {
    pub fn new(fast: ModelProfile, strong: ModelProfile) -> Self {
        ProfileRouting { fast, strong, overrides: BTreeMap::new() }
    }

    /// Offline routing with placeholder endpoints, for replay.
    pub fn offline() -> Self {
        let p = |n: &str| ModelProfile { name: n.into(), endpoint: String::new(), timeout: 60.0 };
        Self::new(p("fast"), p("strong"))
    }

    pub fn profile_for(&self, kind: PromptKind) -> &ModelProfile {
        if let Some(p) = self.overrides.get(&kind) {
            return p;
        }
        match kind {
            PromptKind::DuringTask | PromptKind::RelevanceScore | PromptKind::VoiceAnswer => &self.fast,
            PromptKind::InitialPlan
            | PromptKind::RotationLocalize
            | PromptKind::TransformLocalize
            | PromptKind::SubPlan => &self.strong,
        }
    }
}

/// A model answer plus where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelReply {
    pub text: String,
    pub latency: f64,
    pub profile: String,
}

/// How replay finds a recorded answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayMatch {
    /// Context hash only.
    Exact,
    /// Context hash first; otherwise the n-th recorded call of the same kind
    /// for the n-th call of that kind.
    HashThenSequence,
}

/// Recorded calls indexed for replay.
#[derive(Debug, Default)]
pub struct ReplayPool {
    records: Vec<CallRecord>,
    by_hash: HashMap<Digest, Vec<usize>>,
    by_kind: BTreeMap<PromptKind, Vec<usize>>,
}

impl ReplayPool {
    pub fn new(records: Vec<CallRecord>) -> Self {
        let mut pool = ReplayPool { records, ..Default::default() };
        for (i, r) in pool.records.iter().enumerate() {
            pool.by_hash.entry(r.context_hash.clone()).or_default().push(i);
            pool.by_kind.entry(r.kind).or_default().push(i);
        }
        pool
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        Ok(Self::new(read_records(path)?))
    }

    pub fn from_dir(dir: &Path) -> Result<Self, GatewayError> {
        Ok(Self::new(read_fixture_dir(dir)?))
    }

    pub fn records(&self) -> &[CallRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Default)]
struct ReplayCursor {
    per_hash: HashMap<Digest, usize>,
    per_kind: BTreeMap<PromptKind, usize>,
}

enum Backend {
    Live { transport: Arc<dyn ModelTransport>, writer: Option<Mutex<FixtureWriter>> },
    Replay { pool: Arc<ReplayPool>, cursor: Mutex<ReplayCursor>, matching: ReplayMatch },
}

/// A model gateway. One instance per session keeps replay cursors
/// independent; metrics may be shared.
pub struct Gateway {
    backend: Backend,
    routing: ProfileRouting,
    assets: Arc<AssetCache>,
    metrics: Arc<Metrics>,
}

fn now_secs() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

impl Gateway {
    pub fn live(transport: Arc<dyn ModelTransport>, routing: ProfileRouting, assets: Arc<AssetCache>) -> Self {
        Gateway { backend: Backend::Live { transport, writer: None }, routing, assets, metrics: Arc::default() }
    }

    /// Live calls, each appended to the JSONL file at `fixture` with its
    /// attachments stored beside it.
    pub fn record(
        transport: Arc<dyn ModelTransport>,
        routing: ProfileRouting,
        assets: Arc<AssetCache>,
        fixture: &Path,
    ) -> Result<Self, GatewayError> {
        let writer = FixtureWriter::create(fixture)?;
        Ok(Gateway {
            backend: Backend::Live { transport, writer: Some(Mutex::new(writer)) },
            routing,
            assets,
            metrics: Arc::default(),
        })
    }

    pub fn replay(pool: Arc<ReplayPool>, routing: ProfileRouting) -> Self {
        Gateway {
            backend: Backend::Replay { pool, cursor: Mutex::default(), matching: ReplayMatch::HashThenSequence },
            routing,
            assets: Arc::new(AssetCache::in_memory()),
            metrics: Arc::default(),
        }
    }

    pub fn with_matching(mut self, m: ReplayMatch) -> Self {
        if let Backend::Replay { matching, .. } = &mut self.backend {
            *matching = m;
        }
        self
    }

    pub fn with_metrics(mut self, metrics: Arc<Metrics>) -> Self {
        self.metrics = metrics;
        self
    }

    pub fn mode(&self) -> GatewayMode {
        match &self.backend {
            Backend::Live { writer: None, .. } => GatewayMode::Live,
            Backend::Live { writer: Some(_), .. } => GatewayMode::Record,
            Backend::Replay { .. } => GatewayMode::Replay,
        }
    }

    pub fn metrics(&self) -> &Arc<Metrics> {
        &self.metrics
    }

    pub fn routing(&self) -> &ProfileRouting {
        &self.routing
    }

    /// Calls the profile routed for the prompt's kind.
    pub fn call(&self, prompt: &RenderedPrompt) -> Result<ModelReply, GatewayError> {
        let profile = self.routing.profile_for(prompt.kind).clone();
        self.call_with(prompt, &profile)
    }

    pub fn call_with(&self, prompt: &RenderedPrompt, profile: &ModelProfile) -> Result<ModelReply, GatewayError> {
        let result = match &self.backend {
            Backend::Replay { pool, cursor, matching } => Self::lookup(pool, &mut cursor.lock(), *matching, prompt),
            Backend::Live { transport, writer } => self.send_live(transport.as_ref(), writer.as_ref(), prompt, profile),
        };
        match &result {
            Ok(r) => self.metrics.record(prompt.kind, &r.profile, r.latency),
            Err(GatewayError::Timeout { .. }) => self.metrics.record_timeout(prompt.kind, &profile.name),
            Err(_) => {}
        }
        result
    }

    fn lookup(
        pool: &ReplayPool,
        cursor: &mut ReplayCursor,
        matching: ReplayMatch,
        prompt: &RenderedPrompt,
    ) -> Result<ModelReply, GatewayError> {
        let seq = cursor.per_kind.entry(prompt.kind).or_insert(0);
        let kind_index = *seq;
        *seq += 1;
        let used = cursor.per_hash.entry(prompt.context_hash.clone()).or_insert(0);
        let by_hash = pool.by_hash.get(&prompt.context_hash).and_then(|v| v.get(*used)).copied();
        let index = match (by_hash, matching) {
            (Some(i), _) => {
                *used += 1;
                Some(i)
            }
            (None, ReplayMatch::HashThenSequence) => {
                pool.by_kind.get(&prompt.kind).and_then(|v| v.get(kind_index)).copied()
            }
            (None, ReplayMatch::Exact) => None,
        };
        let rec =
            index.map(|i| &pool.records[i]).ok_or_else(|| GatewayError::ReplayMiss(prompt.context_hash.clone()))?;
        Ok(ModelReply { text: rec.response_text.clone(), latency: rec.latency, profile: rec.profile.clone() })
    }

    fn send_live(
        &self,
        transport: &dyn ModelTransport,
        writer: Option<&Mutex<FixtureWriter>>,
        prompt: &RenderedPrompt,
        profile: &ModelProfile,
    ) -> Result<ModelReply, GatewayError> {
        let blobs = prompt
            .attachments
            .iter()
            .map(|d| self.assets.get(d).ok_or_else(|| GatewayError::MissingAttachment(d.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let images: Vec<&[u8]> = blobs.iter().map(|b| &b[..]).collect();
        let started = Instant::now();
        let reply = transport.send(prompt, &images, profile)?;
        let latency = reply.latency.unwrap_or_else(|| started.elapsed().as_secs_f64());
        if let Some(w) = writer {
            let rec = CallRecord {
                context_hash: prompt.context_hash.clone(),
                kind: prompt.kind,
                profile: profile.name.clone(),
                request_text: prompt.text.clone(),
                attachment_digests: prompt.attachments.clone(),
                response_text: reply.text.clone(),
                latency,
                timestamp: now_secs(),
            };
            let pairs: Vec<(Digest, &[u8])> = prompt.attachments.iter().cloned().zip(images.iter().copied()).collect();
            w.lock().append(&rec, &pairs)?;
        }
        Ok(ModelReply { text: reply.text, latency, profile: profile.name.clone() })
    }
}

/// Gateway settings read from the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    pub mode: GatewayMode,
    pub endpoint: Option<String>,
    pub key: Option<String>,
    pub fixture_dir: Option<PathBuf>,
}

impl GatewayConfig {
    /// Reads `XRG_GATEWAY_MODE` (default replay), `XRG_MODEL_ENDPOINT`,
    /// `XRG_MODEL_KEY` and `XRG_FIXTURE_DIR`.
    pub fn from_env() -> Result<Self, GatewayError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let mode = match var(ENV_MODE) {
            Some(m) => m.parse()?,
            None => GatewayMode::Replay,
        };
        Ok(GatewayConfig {
            mode,
            endpoint: var(ENV_ENDPOINT),
            key: var(ENV_KEY),
            fixture_dir: var(ENV_FIXTURE_DIR).map(PathBuf::from),
        })
    }
}
