use std::collections::{BTreeMap, VecDeque};
use std::time::Duration;

use base64::Engine as _;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{GatewayError, ModelProfile};
use crate::prompt::{PromptKind, RenderedPrompt};

/// A model's answer as seen by the transport.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportReply {
    pub text: String,
    /// Simulated latency for transports that do not measure wall-clock time.
    pub latency: Option<f64>,
}

/// Sends one single-turn multimodal request.
pub trait ModelTransport: Send + Sync {
    fn send(
        &self,
        prompt: &RenderedPrompt,
        images: &[&[u8]],
        profile: &ModelProfile,
    ) -> Result<TransportReply, GatewayError>;
}

/// JSON over HTTP: `POST {model, text, images: [base64]}` with a bearer key;
/// the answer is `{"text": "..."}`.
pub struct HttpTransport {
    key: Option<String>,
}

impl HttpTransport {
    pub fn new(key: Option<String>) -> Self {
        HttpTransport { key }
    }
}

#[derive(Deserialize)]
struct HttpAnswer {
    text: String,
}

impl ModelTransport for HttpTransport {
    fn send(
        &self,
        prompt: &RenderedPrompt,
        images: &[&[u8]],
        profile: &ModelProfile,
    ) -> Result<TransportReply, GatewayError> {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(Duration::from_secs_f64(profile.timeout))).build().into();
        let b64 = base64::engine::general_purpose::STANDARD;
        let body = json!({
            "model": profile.name,
            "text": prompt.text,
            "images": images.iter().map(|b| b64.encode(b)).collect::<Vec<_>>(),
        });
        let mut req = agent.post(&profile.endpoint);
        if let Some(key) = &self.key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_) => GatewayError::Timeout { kind: prompt.kind, after: profile.timeout },
            other => GatewayError::Transport(other.to_string()),
        })?;
        let answer: HttpAnswer =
            resp.body_mut().read_json().map_err(|e| GatewayError::Transport(format!("bad response body: {e}")))?;
        Ok(TransportReply { text: answer.text, latency: None })
    }
}

/// A canned answer for [`ScriptedTransport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedReply {
    pub kind: PromptKind,
    pub text: String,
    #[serde(default)]
    pub latency: Option<f64>,
}

/// Serves canned answers in order, one queue per prompt kind. Used to author
/// fixtures in record mode without a live model.
#[derive(Debug, Default)]
pub struct ScriptedTransport {
    queues: Mutex<BTreeMap<PromptKind, VecDeque<ScriptedReply>>>,
}

impl ScriptedTransport {
    pub fn new(replies: impl IntoIterator<Item = ScriptedReply>) -> Self {
        let mut queues: BTreeMap<PromptKind, VecDeque<ScriptedReply>> = BTreeMap::new();
        for r in replies {
            queues.entry(r.kind).or_default().push_back(r);
        }
        ScriptedTransport { queues: Mutex::new(queues) }
    }

    pub fn remaining(&self) -> usize {
        self.queues.lock().values().map(VecDeque::len).sum()
    }
}

impl ModelTransport for ScriptedTransport {
    fn send(
        &self,
        prompt: &RenderedPrompt,
        _images: &[&[u8]],
        _profile: &ModelProfile,
    ) -> Result<TransportReply, GatewayError> {
        let reply = self
            .queues
            .lock()
            .get_mut(&prompt.kind)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| GatewayError::Transport(format!("no scripted reply left for {}", prompt.kind)))?;
        Ok(TransportReply { text: reply.text, latency: reply.latency })
    }
}
