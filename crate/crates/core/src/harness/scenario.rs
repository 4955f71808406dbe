use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::frames::FrameSpec;
use super::HarnessError;
use crate::fsm::{AudioCueKind, FailurePolicy};
use crate::gateway::{Gateway, GatewayMode, ProfileRouting, ReplayPool, ScriptedReply, ScriptedTransport};
use crate::media::{
    AssetCache, FixtureClipDecoder, MediaConfig, MediaServices, MockSegmentation, OfflineProvider, RetrievalProvider,
};
use crate::plan::{ActionViz, ObjectViz, StepStatus, StepType};
use crate::render::DirectiveKind;
use crate::session::{
    ClientMessage, EngineServices, Envelope, EventBody, EventLog, Phase, SessionEngine, SessionEvent,
};
use crate::spatial::NormBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action")]
pub enum ScriptAction {
    SendFrame {
        frame: usize,
    },
    Verify,
    Voice {
        text: String,
    },
    FireSignal {
        token: String,
    },
    RegisterSignal {
        step: usize,
        token: String,
    },
    Skip {
        index: usize,
        #[serde(default)]
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "expect")]
pub enum Expectation {
    PlanHasSteps {
        min: usize,
        max: usize,
    },
    /// Some directive batch for `step` (the `nth` one, if given) contains
    /// every kind in `kinds` and none in `absent`.
    DirectiveKindAt {
        step: usize,
        kinds: Vec<DirectiveKind>,
        #[serde(default)]
        absent: Vec<DirectiveKind>,
        #[serde(default)]
        nth: Option<usize>,
    },
    VerifyResult {
        step: usize,
        success: bool,
    },
    SubPlanInsertedAt {
        step: usize,
        #[serde(default)]
        count: Option<usize>,
    },
    /// Exactly `count` cues of this kind, or at least one without a count.
    AudioCue {
        cue: AudioCueKind,
        #[serde(default)]
        count: Option<usize>,
    },
    VizRevisedAt {
        step: usize,
    },
    AnswerContains {
        text: String,
    },
    FinalStatus {
        phase: Phase,
        #[serde(default)]
        statuses: Option<Vec<StepStatus>>,
    },
    NoErrors,
}

fn default_fixtures() -> String {
    "calls.jsonl".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub prompt: String,
    pub frames: Vec<FrameSpec>,
    pub script: Vec<ScriptAction>,
    /// Recorded model calls (JSONL), relative to the scenario file.
    #[serde(default = "default_fixtures")]
    pub fixtures: String,
    /// Scripted model answers used to (re)record `fixtures`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responses: Option<String>,
    /// Offline media manifest, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media: Option<String>,
    /// Boxes the mock segmenter returns per label.
    #[serde(default)]
    pub segmentation: BTreeMap<String, NormBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<FailurePolicy>,
    pub expectations: Vec<Expectation>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<(Scenario, PathBuf), HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        let s: Scenario = serde_json::from_str(&text)
            .map_err(|e| HarnessError::ScenarioInvalid(format!("{}: {e}", path.display())))?;
        s.validate()?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok((s, base))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |m: String| Err(HarnessError::ScenarioInvalid(format!("{}: {m}", self.name)));
        if self.name.trim().is_empty()
            || !self.name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
        {
            return invalid("name must be non-empty [A-Za-z0-9_-]".into());
        }
        if self.prompt.trim().is_empty() {
            return invalid("empty prompt".into());
        }
        let mut sent = false;
        for (i, a) in self.script.iter().enumerate() {
            match a {
                ScriptAction::SendFrame { frame } if *frame >= self.frames.len() => {
                    return invalid(format!("script[{i}] sends frame {frame} of {}", self.frames.len()));
                }
                ScriptAction::SendFrame { .. } => sent = true,
                ScriptAction::Verify if !sent => {
                    return invalid(format!("script[{i}] verifies before any frame was sent"));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Where model answers come from during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureMode {
    /// Replay the recorded fixture file.
    Replay,
    /// Serve the scripted responses and rewrite the fixture file.
    Record,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: FixtureMode,
    /// Writes `<dir>/<scenario>.jsonl` when set.
    pub log_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { mode: FixtureMode::Replay, log_dir: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub model_calls: usize,
    pub calls_by_kind: BTreeMap<String, usize>,
    pub model_latency_total: f64,
    pub verifications: usize,
    pub directive_batches: usize,
    pub completed_steps: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub passed: bool,
    pub failures: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_log: Option<PathBuf>,
    pub metrics: RunMetrics,
    #[serde(skip)]
    pub events: Vec<SessionEvent>,
    #[serde(skip)]
    pub final_statuses: Vec<StepStatus>,
}

fn media_for(s: &Scenario, base: &Path, cache: Arc<AssetCache>) -> Result<MediaServices, HarnessError> {
    let provider: Arc<dyn RetrievalProvider> = match &s.media {
        Some(m) => {
            Arc::new(OfflineProvider::from_manifest(&base.join(m)).map_err(|e| HarnessError::Io(e.to_string()))?)
        }
        None => Arc::new(OfflineProvider::empty()),
    };
    Ok(MediaServices {
        provider,
        decoder: Arc::new(FixtureClipDecoder),
        segmenter: Arc::new(MockSegmentation::new(s.segmentation.clone())),
        cache,
        config: MediaConfig::default(),
    })
}

fn read_responses(path: &Path) -> Result<Vec<ScriptedReply>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::ScenarioInvalid(format!("{}: {e}", path.display())))
}

/// A clock advancing one millisecond per reading, so runs are repeatable.
fn step_clock() -> crate::session::Clock {
    let ticks = Arc::new(AtomicU64::new(0));
    Arc::new(move || ticks.fetch_add(1, Ordering::Relaxed) as f64 / 1000.0)
}

/// Runs a scenario in-process and checks its expectations against the
/// event stream. Failed expectations are collected, not fatal.
pub fn run_scenario(s: &Scenario, base: &Path, opts: &RunOptions) -> Result<ScenarioReport, HarnessError> {
    s.validate()?;
    let cache = Arc::new(AssetCache::in_memory());
    let media = Arc::new(media_for(s, base, Arc::clone(&cache))?);
    let mut services = EngineServices::new(media).map_err(|e| HarnessError::Io(e.to_string()))?;
    if let Some(p) = s.policy {
        services.policy = p;
    }
    let services = Arc::new(services);
    let fixture = base.join(&s.fixtures);
    let mut transport = None;
    let gateway = match opts.mode {
        FixtureMode::Replay => {
            let pool = ReplayPool::from_file(&fixture).map_err(HarnessError::Fixture)?;
            Gateway::replay(Arc::new(pool), ProfileRouting::offline())
        }
        FixtureMode::Record => {
            let responses = s.responses.as_ref().ok_or_else(|| {
                HarnessError::ScenarioInvalid(format!("{}: recording needs a responses file", s.name))
            })?;
            let t = Arc::new(ScriptedTransport::new(read_responses(&base.join(responses))?));
            transport = Some(Arc::clone(&t));
            Gateway::record(t, ProfileRouting::offline(), Arc::clone(&cache), &fixture)
                .map_err(HarnessError::Fixture)?
        }
    };
    debug_assert!(matches!(gateway.mode(), GatewayMode::Replay | GatewayMode::Record));
    let (log, log_path) = match &opts.log_dir {
        Some(dir) => {
            let p = dir.join(format!("{}.jsonl", s.name));
            (EventLog::create(&p).map_err(|e| HarnessError::Io(e.to_string()))?, Some(p))
        }
        None => (EventLog::in_memory(), None),
    };
    let mut engine = SessionEngine::new(s.name.clone(), gateway, services, log).with_clock(step_clock());

    let mut seq = 0u64;
    let mut send = |engine: &mut SessionEngine, msg: ClientMessage| {
        seq += 1;
        engine.handle(Envelope::new(s.name.clone(), seq, msg));
    };
    send(&mut engine, ClientMessage::StartTask { prompt: s.prompt.clone() });
    for action in &s.script {
        let msg = match action {
            ScriptAction::SendFrame { frame } => {
                let input =
                    s.frames[*frame].upload(&cache, *frame as f64).map_err(|e| HarnessError::Io(e.to_string()))?;
                ClientMessage::FrameUpdate(input)
            }
            ScriptAction::Verify => ClientMessage::VerifyRequest,
            ScriptAction::Voice { text } => ClientMessage::VoiceQuery { text: text.clone() },
            ScriptAction::FireSignal { token } => ClientMessage::FireSignal { token: token.clone() },
            ScriptAction::RegisterSignal { step, token } => {
                ClientMessage::RegisterSignal { step_index: *step, token: token.clone() }
            }
            ScriptAction::Skip { index, reason } => ClientMessage::SkipStep { index: *index, reason: reason.clone() },
        };
        send(&mut engine, msg);
    }
    send(&mut engine, ClientMessage::EndSession);

    let events = engine.events().to_vec();
    let final_phase = final_phase(&events);
    let final_statuses: Vec<StepStatus> =
        engine.plan().map(|p| p.steps.iter().map(|st| st.status).collect()).unwrap_or_default();
    let mut failures: Vec<String> =
        s.expectations.iter().filter_map(|e| check(e, &events, final_phase, &final_statuses).err()).collect();
    if let Some(t) = transport {
        if t.remaining() > 0 {
            failures.push(format!("{} scripted responses were never used", t.remaining()));
        }
    }
    let metrics = metrics(&events, &final_statuses);
    Ok(ScenarioReport {
        name: s.name.clone(),
        passed: failures.is_empty(),
        failures,
        event_log: log_path,
        metrics,
        events,
        final_statuses,
    })
}

/// Phase the session reached before it was closed.
fn final_phase(events: &[SessionEvent]) -> Phase {
    let mut phase = Phase::New;
    for e in events {
        phase = match &e.body {
            EventBody::PlanReady { .. } => Phase::Executing,
            EventBody::TaskComplete => Phase::Done,
            EventBody::Error { code: crate::session::ErrorCode::ReplayMiss, .. } => Phase::Failed,
            _ => phase,
        };
    }
    phase
}

fn metrics(events: &[SessionEvent], statuses: &[StepStatus]) -> RunMetrics {
    let mut m = RunMetrics::default();
    for e in events {
        match &e.body {
            EventBody::ModelCalled { prompt, latency, .. } => {
                m.model_calls += 1;
                *m.calls_by_kind.entry(prompt.as_str().to_string()).or_default() += 1;
                m.model_latency_total += latency.unwrap_or(0.0);
            }
            EventBody::VerificationResult { .. } => m.verifications += 1,
            EventBody::DirectiveBatchSent { .. } => m.directive_batches += 1,
            EventBody::Error { .. } => m.errors += 1,
            _ => {}
        }
    }
    m.completed_steps = statuses.iter().filter(|s| **s == StepStatus::Completed).count();
    m
}

fn check(e: &Expectation, events: &[SessionEvent], phase: Phase, statuses: &[StepStatus]) -> Result<(), String> {
    let bodies = || events.iter().map(|e| &e.body);
    match e {
        Expectation::PlanHasSteps { min, max } => {
            let n = bodies()
                .find_map(|b| match b {
                    EventBody::PlanReady { steps, .. } => Some(steps.len()),
                    _ => None,
                })
                .ok_or("no plan was produced")?;
            if (*min..=*max).contains(&n) {
                Ok(())
            } else {
                Err(format!("plan has {n} steps, expected {min}..={max}"))
            }
        }
        Expectation::DirectiveKindAt { step, kinds, absent, nth } => {
            let batches: Vec<Vec<DirectiveKind>> = bodies()
                .filter_map(|b| match b {
                    EventBody::DirectiveBatchSent { batch } if batch.step_index == *step => Some(batch.kinds()),
                    _ => None,
                })
                .collect();
            let ok =
                |k: &Vec<DirectiveKind>| kinds.iter().all(|x| k.contains(x)) && !absent.iter().any(|x| k.contains(x));
            let pass = match nth {
                Some(n) => batches.get(*n).is_some_and(ok),
                None => batches.iter().any(ok),
            };
            if pass {
                Ok(())
            } else {
                Err(format!("step {step}: no batch with {kinds:?} and without {absent:?}; batches were {batches:?}"))
            }
        }
        Expectation::VerifyResult { step, success } => {
            let found = bodies().any(|b| {
                matches!(b, EventBody::VerificationResult { step_index, success: s, .. } if step_index == step && s == success)
            });
            found.then_some(()).ok_or_else(|| format!("no verification of step {step} with success={success}"))
        }
        Expectation::SubPlanInsertedAt { step, count } => {
            let found = bodies().find_map(|b| match b {
                EventBody::SubPlanInserted { parent, substeps } if parent == step => Some(substeps.len()),
                _ => None,
            });
            match (found, count) {
                (None, _) => Err(format!("no sub-plan inserted at step {step}")),
                (Some(n), Some(c)) if n != *c => Err(format!("sub-plan at step {step} has {n} substeps, expected {c}")),
                _ => Ok(()),
            }
        }
        Expectation::AudioCue { cue, count } => {
            let n = bodies().filter(|b| matches!(b, EventBody::AudioCueSent { cue: c } if c == cue)).count();
            match count {
                Some(c) if n != *c => Err(format!("{n} {cue:?} cues, expected {c}")),
                None if n == 0 => Err(format!("no {cue:?} cue")),
                _ => Ok(()),
            }
        }
        Expectation::VizRevisedAt { step } => bodies()
            .any(|b| matches!(b, EventBody::VizRevised { step_index, .. } if step_index == step))
            .then_some(())
            .ok_or_else(|| format!("viz of step {step} was never revised")),
        Expectation::AnswerContains { text } => bodies()
            .any(|b| matches!(b, EventBody::VoiceAnswer { text: t, error: None } if t.contains(text.as_str())))
            .then_some(())
            .ok_or_else(|| format!("no answer containing {text:?}")),
        Expectation::FinalStatus { phase: want, statuses: want_statuses } => {
            if phase != *want {
                return Err(format!("final phase {phase:?}, expected {want:?}"));
            }
            match want_statuses {
                Some(w) if w.as_slice() != statuses => Err(format!("final statuses {statuses:?}, expected {w:?}")),
                _ => Ok(()),
            }
        }
        Expectation::NoErrors => {
            let errors: Vec<String> = bodies()
                .filter_map(|b| match b {
                    EventBody::Error { code, detail } => Some(format!("{code:?}: {detail}")),
                    _ => None,
                })
                .collect();
            errors.is_empty().then_some(()).ok_or_else(|| format!("errors: {errors:?}"))
        }
    }
}

/// What a set of runs exercised.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub step_types: BTreeSet<StepType>,
    pub object_viz: BTreeSet<String>,
    /// Action visualizations drawn, with `"None"` for batches without one.
    pub action_viz: BTreeSet<String>,
    pub special_rule: bool,
    pub subplan: bool,
    pub revision: bool,
    pub voice: bool,
    pub signal: bool,
    pub skip: bool,
}

impl Coverage {
    pub fn add(&mut self, events: &[SessionEvent]) {
        for e in events {
            match &e.body {
                EventBody::PlanReady { steps, .. } => self.step_types.extend(steps.iter().map(|s| s.step_type)),
                EventBody::DirectiveBatchSent { batch } => {
                    let kinds = batch.kinds();
                    let mut action = None;
                    for k in &kinds {
                        match k {
                            DirectiveKind::Outline => {
                                self.object_viz.insert(ObjectViz::Outline.as_str().into());
                            }
                            DirectiveKind::ShapePreview => {
                                self.object_viz.insert(ObjectViz::ShapePreview.as_str().into());
                            }
                            DirectiveKind::AnimatedShapePreview => {
                                self.special_rule = true;
                                self.object_viz.insert(ObjectViz::ShapePreview.as_str().into());
                                action = Some(ActionViz::Arrow.as_str());
                            }
                            DirectiveKind::ArrowTranslation | DirectiveKind::ArrowRotation => {
                                action = Some(ActionViz::Arrow.as_str())
                            }
                            DirectiveKind::GestureOverlay => action = Some(ActionViz::Gesture.as_str()),
                            DirectiveKind::ToolOverlay => action = Some(ActionViz::Tool.as_str()),
                            _ => {}
                        }
                    }
                    self.action_viz.insert(action.unwrap_or("None").to_string());
                }
                EventBody::SubPlanInserted { .. } => self.subplan = true,
                EventBody::VizRevised { .. } => self.revision = true,
                EventBody::VoiceAnswer { error: None, .. } => self.voice = true,
                EventBody::VerificationResult { signal: true, .. } => self.signal = true,
                EventBody::StepsSkipped { .. } => self.skip = true,
                _ => {}
            }
        }
    }
}
