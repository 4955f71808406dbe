use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::events::{ErrorCode, EventBody, EventLog, RevisionReason, SessionEvent, StepView};
use super::frames::{resolve_frame, DefaultCamera};
use super::protocol::{ClientMessage, Envelope, FrameInput, ServerMessage};
use crate::digest::Digest;
use crate::fsm::{rotate_viz, FailurePolicy, GuidanceFsm, RevisionAction, SubPlan, WHOLE_VIEW};
use crate::gateway::{Gateway, GatewayError, ModelReply};
use crate::media::{AssetKind, AssetRef, MediaServices, Scorer};
use crate::plan::{
    parse_plan_document, viz_to_value, ActionViz, ObjectViz, PlannerResponse, PlannerResponseDoc, StepId, StepOrigin,
    StepStatus, TaskPlan, VizSpec, SUBSTEP_SEPARATOR,
};
use crate::prompt::{
    domain_tags_from_doc, parse_relevance_answer, parse_rotation_answer, parse_subplan_draft, parse_transform_answer,
    parse_verification_response, parse_voice_reply, synthesize_plan, LocalizationAnswer, RelevanceAnswer,
    RenderedPrompt, TemplateSet, TransformKind, VerificationOutcome,
};
use crate::render::{render_step, AssetCatalog, ResolvedAnchors, StepAssets};
use crate::spatial::{anchor_box, resolve_motion, CameraFrame, NormBox};

/// Shared, read-only collaborators of every session.
pub struct EngineServices {
    pub templates: Arc<TemplateSet>,
    pub media: Arc<MediaServices>,
    pub catalog: Arc<AssetCatalog>,
    pub policy: FailurePolicy,
    pub camera: DefaultCamera,
}

impl EngineServices {
    /// Offline services around `media`, with the builtin templates and icons.
    pub fn new(media: Arc<MediaServices>) -> std::io::Result<Self> {
        let catalog = AssetCatalog::builtin(&media.cache)?;
        Ok(EngineServices {
            templates: Arc::new(TemplateSet::builtin()),
            media,
            catalog: Arc::new(catalog),
            policy: FailurePolicy::default(),
            camera: DefaultCamera::default(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    New,
    Planning,
    Executing,
    Done,
    Failed,
    Closed,
}

pub type Clock = Arc<dyn Fn() -> f64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
    })
}

enum StepFailure {
    Gateway(GatewayError),
    Other(String),
}

impl From<GatewayError> for StepFailure {
    fn from(e: GatewayError) -> Self {
        StepFailure::Gateway(e)
    }
}

fn other(e: impl ToString) -> StepFailure {
    StepFailure::Other(e.to_string())
}

fn model_called(prompt: &RenderedPrompt, result: &Result<ModelReply, GatewayError>) -> EventBody {
    match result {
        Ok(r) => EventBody::ModelCalled {
            prompt: prompt.kind,
            context_hash: prompt.context_hash.clone(),
            profile: Some(r.profile.clone()),
            latency: Some(r.latency),
            response: Some(Digest::of(r.text.as_bytes())),
            error: None,
        },
        Err(e) => EventBody::ModelCalled {
            prompt: prompt.kind,
            context_hash: prompt.context_hash.clone(),
            profile: None,
            latency: None,
            response: None,
            error: Some(e.to_string()),
        },
    }
}

/// Relevance scoring through the gateway, remembering each call for the log.
struct LoggingScorer<'a> {
    gateway: &'a Gateway,
    templates: &'a TemplateSet,
    calls: RefCell<Vec<EventBody>>,
}

impl Scorer for LoggingScorer<'_> {
    fn score(&self, asset: &AssetRef, goal: &str, step: &str) -> Result<RelevanceAnswer, String> {
        let prompt = self.templates.render_relevance_prompt(goal, step, &asset.digest);
        let result = self.gateway.call(&prompt);
        self.calls.borrow_mut().push(model_called(&prompt, &result));
        parse_relevance_answer(&result.map_err(|e| e.to_string())?.text).map_err(|e| e.to_string())
    }
}

/// One task session. Messages are handled strictly one at a time; every
/// state change is recorded as an event before any reply leaves.
pub struct SessionEngine {
    id: String,
    phase: Phase,
    gateway: Gateway,
    services: Arc<EngineServices>,
    log: EventLog,
    clock: Clock,
    fsm: Option<GuidanceFsm>,
    base_doc: Option<PlannerResponseDoc>,
    references: BTreeMap<StepId, AssetRef>,
    frame: Option<CameraFrame>,
    needs_render: bool,
    signals: BTreeMap<String, StepId>,
    presatisfied: BTreeSet<StepId>,
    queued_queries: Vec<String>,
    last_client_seq: Option<u64>,
    client_seq: Option<u64>,
    next_event_seq: u64,
    next_server_seq: u64,
}

impl SessionEngine {
    pub fn new(id: impl Into<String>, gateway: Gateway, services: Arc<EngineServices>, log: EventLog) -> Self {
        SessionEngine {
            id: id.into(),
            phase: Phase::New,
            gateway,
            services,
            log,
            clock: system_clock(),
            fsm: None,
            base_doc: None,
            references: BTreeMap::new(),
            frame: None,
            needs_render: false,
            signals: BTreeMap::new(),
            presatisfied: BTreeSet::new(),
            queued_queries: Vec::new(),
            last_client_seq: None,
            client_seq: None,
            next_event_seq: 0,
            next_server_seq: 0,
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn plan(&self) -> Option<&TaskPlan> {
        self.fsm.as_ref().map(GuidanceFsm::plan)
    }

    pub fn fsm(&self) -> Option<&GuidanceFsm> {
        self.fsm.as_ref()
    }

    pub fn events(&self) -> &[SessionEvent] {
        self.log.events()
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn current_frame(&self) -> Option<&CameraFrame> {
        self.frame.as_ref()
    }

    /// Handles one client message and returns the server's replies in order.
    pub fn handle(&mut self, env: Envelope<ClientMessage>) -> Vec<Envelope<ServerMessage>> {
        let start = self.log.len();
        self.client_seq = Some(env.seq);
        if self.last_client_seq.is_some_and(|last| env.seq <= last) {
            let detail = format!(
                "{} seq {} is not above {}",
                env.message.type_name(),
                env.seq,
                self.last_client_seq.unwrap_or_default()
            );
            self.error(ErrorCode::OutOfOrderSeq, detail);
        } else {
            self.last_client_seq = Some(env.seq);
            self.dispatch(env.message);
        }
        self.client_seq = None;
        let bodies: Vec<ServerMessage> =
            self.log.events()[start..].iter().filter_map(|e| e.body.to_message()).collect();
        bodies
            .into_iter()
            .map(|m| {
                let seq = self.next_server_seq;
                self.next_server_seq += 1;
                Envelope::new(self.id.clone(), seq, m)
            })
            .collect()
    }

    fn emit(&mut self, body: EventBody) {
        let event =
            SessionEvent { seq: self.next_event_seq, timestamp: (self.clock)(), client_seq: self.client_seq, body };
        self.next_event_seq += 1;
        if let Err(e) = self.log.append(event) {
            tracing::error!(session = %self.id, error = %e, "could not persist event");
        }
    }

    fn error(&mut self, code: ErrorCode, detail: impl Into<String>) {
        let detail = detail.into();
        tracing::debug!(session = %self.id, ?code, %detail, "session error");
        self.emit(EventBody::Error { code, detail });
    }

    /// Reports a failed model call. A replay miss means the recorded
    /// session cannot continue, so the session fails.
    fn gateway_failed(&mut self, code: ErrorCode, e: GatewayError) {
        if let GatewayError::ReplayMiss(_) = e {
            self.error(ErrorCode::ReplayMiss, e.to_string());
            self.phase = Phase::Failed;
        } else {
            self.error(code, e.to_string());
        }
    }

    fn step_failed(&mut self, code: ErrorCode, f: StepFailure) {
        match f {
            StepFailure::Gateway(e) => self.gateway_failed(code, e),
            StepFailure::Other(detail) => self.error(code, detail),
        }
    }

    fn call(&mut self, prompt: &RenderedPrompt) -> Result<ModelReply, GatewayError> {
        let result = self.gateway.call(prompt);
        self.emit(model_called(prompt, &result));
        result
    }

    fn dispatch(&mut self, msg: ClientMessage) {
        if self.phase == Phase::Closed {
            self.error(ErrorCode::SessionClosed, format!("{} after EndSession", msg.type_name()));
            return;
        }
        match msg {
            ClientMessage::StartTask { prompt } => {
                if self.phase != Phase::New {
                    self.error(ErrorCode::AlreadyStarted, "this session already has a task");
                    return;
                }
                self.emit(EventBody::SessionStarted { session_id: self.id.clone(), prompt: prompt.clone() });
                self.plan_task(&prompt);
            }
            ClientMessage::FrameUpdate(input) => self.frame_update(&input),
            ClientMessage::VerifyRequest => {
                self.emit(EventBody::VerifyRequested);
                if self.require_executing() {
                    if self.frame.is_none() {
                        self.error(ErrorCode::NoFrame, "send a FrameUpdate before verifying");
                    } else {
                        self.verify();
                    }
                }
            }
            ClientMessage::VoiceQuery { text } => {
                self.emit(EventBody::VoiceQuery { text: text.clone() });
                match self.phase {
                    Phase::New | Phase::Planning => {
                        self.queued_queries.push(text.clone());
                        self.emit(EventBody::QueryQueued { text });
                    }
                    Phase::Executing => self.answer_voice(&text),
                    _ => self.error(ErrorCode::NotExecuting, "no step is running"),
                }
            }
            ClientMessage::RegisterSignal { step_index, token } => {
                self.emit(EventBody::SignalRegistered { step_index, token: token.clone() });
                if !self.require_executing() {
                    return;
                }
                match self.plan().and_then(|p| p.steps.get(step_index)).map(|s| s.id) {
                    Some(id) => {
                        self.signals.insert(token, id);
                    }
                    None => self.error(ErrorCode::InvalidStep, format!("no step {step_index}")),
                }
            }
            ClientMessage::FireSignal { token } => {
                self.emit(EventBody::SignalFired { token: token.clone() });
                if self.require_executing() {
                    self.fire_signal(&token);
                }
            }
            ClientMessage::SkipStep { index, reason } => {
                self.emit(EventBody::SkipCommand { index, reason: reason.clone() });
                if self.require_executing() {
                    self.skip(index, reason);
                }
            }
            ClientMessage::EndSession => {
                self.emit(EventBody::SessionClosed);
                self.phase = Phase::Closed;
            }
        }
    }

    fn require_executing(&mut self) -> bool {
        if self.phase == Phase::Executing {
            return true;
        }
        let phase = self.phase;
        self.error(ErrorCode::NotExecuting, format!("session is {phase:?}"));
        false
    }

    fn frame_update(&mut self, input: &FrameInput) {
        let services = Arc::clone(&self.services);
        match resolve_frame(input, &services.media.cache, &services.camera) {
            Ok((frame, depth_blob)) => {
                self.emit(EventBody::FrameReceived { frame: frame.clone(), depth_blob });
                self.frame = Some(frame);
                if self.phase == Phase::Executing && self.needs_render {
                    self.refresh_directives();
                }
            }
            Err(detail) => self.error(ErrorCode::PayloadInvalid, detail),
        }
    }

    fn plan_task(&mut self, prompt: &str) {
        self.phase = Phase::Planning;
        let services = Arc::clone(&self.services);
        let mut warnings = Vec::new();
        let images: Vec<Digest> =
            services.media.goal_images(prompt, &mut warnings).into_iter().map(|a| a.digest).collect();
        let rendered = match services.templates.render_initial_prompt(prompt, &images) {
            Ok(p) => p,
            Err(e) => {
                self.phase = Phase::New;
                return self.error(ErrorCode::PayloadInvalid, e.to_string());
            }
        };
        let reply = match self.call(&rendered) {
            Ok(r) => r,
            Err(e) => {
                self.phase = Phase::New;
                return self.gateway_failed(ErrorCode::PlanFailed, e);
            }
        };
        let built = parse_plan_document(&reply.text).map_err(|e| e.to_string()).and_then(|doc| {
            let tags = domain_tags_from_doc(&doc).map_err(|e| e.to_string())?;
            let plan = synthesize_plan(&doc, tags.as_deref()).map_err(|e| e.to_string())?;
            Ok((doc, plan))
        });
        let (doc, plan) = match built {
            Ok(x) => x,
            Err(detail) => {
                self.phase = Phase::New;
                return self.error(ErrorCode::PlanFailed, detail);
            }
        };

        let instructions: Vec<String> = plan.steps.iter().map(|s| s.instruction.clone()).collect();
        let scorer =
            LoggingScorer { gateway: &self.gateway, templates: &services.templates, calls: RefCell::default() };
        let report = services.media.prefetch_steps(&plan.goal, &instructions, &scorer);
        for call in scorer.calls.into_inner() {
            self.emit(call);
        }
        for w in report.warnings.iter().chain(&warnings) {
            tracing::info!(session = %self.id, warning = %w, "media prefetch");
        }
        for sm in &report.steps {
            if let (Some(top), Some(step)) = (sm.top(), plan.steps.get(sm.step_index)) {
                self.references.insert(step.id, top.clone());
            }
        }

        let mut fsm = GuidanceFsm::new(plan, services.policy);
        let started = fsm.start();
        let p = fsm.plan();
        let ready = EventBody::PlanReady {
            goal: p.goal.clone(),
            steps: p.steps.iter().map(StepView::from).collect(),
            active_index: p.active_index,
            warnings: p.warnings.clone(),
        };
        self.fsm = Some(fsm);
        self.base_doc = Some(doc);
        self.phase = Phase::Executing;
        self.emit(ready);
        match started {
            Ok(Some(_)) => self.on_activated(),
            Ok(None) => self.finish(),
            Err(e) => self.error(ErrorCode::PlanFailed, e.to_string()),
        }
        for text in std::mem::take(&mut self.queued_queries) {
            if self.phase != Phase::Executing {
                break;
            }
            self.answer_voice(&text);
        }
    }

    fn on_activated(&mut self) {
        self.needs_render = true;
        self.refresh_directives();
    }

    fn finish(&mut self) {
        self.emit(EventBody::TaskComplete);
        self.phase = Phase::Done;
    }

    fn fsm_ref(&self) -> &GuidanceFsm {
        self.fsm.as_ref().expect("executing sessions have a plan")
    }

    fn fsm_mut(&mut self) -> &mut GuidanceFsm {
        self.fsm.as_mut().expect("executing sessions have a plan")
    }

    /// Localizes and renders the cursor step once a frame is available.
    fn refresh_directives(&mut self) {
        let Some(index) = self.fsm.as_ref().and_then(GuidanceFsm::cursor_index) else { return };
        if self.frame.is_none() {
            return;
        }
        let prepared = self.prepare(index);
        let (anchors, assets) = match prepared {
            Ok(x) => x,
            Err(f) => return self.step_failed(ErrorCode::LocalizationFailed, f),
        };
        match render_step(self.fsm_ref().plan(), &anchors, &assets, &self.services.catalog) {
            Ok(batch) => {
                self.needs_render = false;
                self.emit(EventBody::DirectiveBatchSent { batch });
            }
            Err(e) => self.error(ErrorCode::LocalizationFailed, e.to_string()),
        }
    }

    fn reference_for(&self, index: usize) -> Option<AssetRef> {
        let plan = self.fsm_ref().plan();
        let owner = plan.owning_original(index)?;
        self.references.get(&plan.steps[owner].id).cloned()
    }

    fn prepare(&mut self, index: usize) -> Result<(ResolvedAnchors, StepAssets), StepFailure> {
        let frame = self.frame.clone().expect("checked by caller");
        let step = self.fsm_ref().plan().steps[index].clone();
        let reference = self.reference_for(index);
        let services = Arc::clone(&self.services);
        let viz = match step.viz.clone() {
            Some(v) if v.primary_object().is_some_and(|n| n != WHOLE_VIEW) => v,
            _ => {
                let object = anchor_box(&frame, NormBox::full()).map_err(other)?;
                return Ok((
                    ResolvedAnchors { object: Some(object), motion: None },
                    StepAssets { mask: None, reference },
                ));
            }
        };
        let target = viz.primary_object().expect("checked above").to_string();
        let image = frame.image.clone().ok_or_else(|| other("the current frame has no image to localize in"))?;

        let (object_box, answer) = if viz.needs_rotation {
            let mut frames = vec![image.clone()];
            frames.extend(reference.as_ref().map(|r| r.digest.clone()));
            let prompt = services.templates.render_rotation_prompt(&target, &frames).map_err(other)?;
            let reply = self.call(&prompt)?;
            let ans = parse_rotation_answer(&reply.text).map_err(other)?;
            (ans.pos, LocalizationAnswer::Rotation(ans))
        } else {
            let prompt =
                services.templates.render_transform_prompt(&target, std::slice::from_ref(&image)).map_err(other)?;
            let reply = self.call(&prompt)?;
            let ans = parse_transform_answer(&reply.text).map_err(other)?;
            let named = ans.entries.iter().find(|e| e.name.trim().eq_ignore_ascii_case(target.trim()));
            let chosen = named
                .or_else(|| ans.first(TransformKind::StartTarget))
                .or_else(|| ans.first(TransformKind::Object))
                .or_else(|| ans.entries.first())
                .ok_or_else(|| other(format!("no box for {target:?}")))?;
            (chosen.pos, LocalizationAnswer::Transform(ans))
        };
        let object = anchor_box(&frame, object_box).map_err(other)?;
        let motion = if viz.action_viz == Some(ActionViz::Arrow) && (viz.needs_rotation || viz.needs_translation) {
            Some(resolve_motion(&viz, &answer, &frame).map_err(other)?)
        } else {
            None
        };
        let mask = if viz.object_viz == ObjectViz::ShapePreview {
            let source = reference.clone().unwrap_or_else(|| AssetRef::new(image.clone(), AssetKind::Image));
            match services.media.segment(&source, &target) {
                Ok(m) => Some(m),
                Err(e) => {
                    tracing::warn!(session = %self.id, error = %e, "segmentation failed");
                    None
                }
            }
        } else {
            None
        };
        Ok((ResolvedAnchors { object: Some(object), motion }, StepAssets { mask, reference }))
    }

    /// The planner document describing the cursor step, used as the template
    /// in verification prompts.
    fn prior_doc(&self, index: usize) -> PlannerResponseDoc {
        let fsm = self.fsm_ref();
        let plan = fsm.plan();
        let step = &plan.steps[index];
        let next = match step.origin {
            StepOrigin::Original => step.instruction.clone(),
            StepOrigin::SubStep(p) => {
                format!("{}{}{}", plan.steps[p].instruction, SUBSTEP_SEPARATOR, step.instruction)
            }
        };
        let base = self.base_doc.as_ref().expect("plan came from a document");
        PlannerResponseDoc {
            goal: plan.goal.clone(),
            steps: plan.steps.iter().filter(|s| s.is_original()).map(|s| s.instruction.clone()).collect(),
            response: PlannerResponse {
                next,
                check: fsm.pending_check(step.id).to_string(),
                success: false,
                viz: step.viz.clone().unwrap_or_else(|| VizSpec::outline(WHOLE_VIEW)),
                extra: base.response.extra.clone(),
            },
            extra: base.extra.clone(),
        }
    }

    fn verify(&mut self) {
        let Some(index) = self.fsm_ref().cursor_index() else {
            return self.error(ErrorCode::NotExecuting, "no step is running");
        };
        let id = self.fsm_ref().plan().steps[index].id;
        if let Err(e) = self.fsm_mut().begin_verification() {
            return self.error(ErrorCode::VerificationFailed, e.to_string());
        }
        if self.presatisfied.remove(&id) {
            return self.apply_outcome(&VerificationOutcome::passed(), true);
        }
        match self.ask_verifier(index) {
            Ok(outcome) => self.apply_outcome(&outcome, false),
            Err(f) => {
                self.fsm_mut().abort_verification();
                self.step_failed(ErrorCode::VerificationFailed, f);
            }
        }
    }

    fn ask_verifier(&mut self, index: usize) -> Result<VerificationOutcome, StepFailure> {
        let image = self
            .frame
            .as_ref()
            .and_then(|f| f.image.clone())
            .ok_or_else(|| other("the current frame has no image to verify against"))?;
        let prior = self.prior_doc(index);
        let fsm = self.fsm_ref();
        let step = &fsm.plan().steps[index];
        let prompt = self
            .services
            .templates
            .render_during_task_prompt(step, Some(&prior), fsm.pending_check(step.id), &image)
            .map_err(other)?;
        let shown = step.viz.clone();
        let reply = self.call(&prompt)?;
        parse_verification_response(&reply.text, shown.as_ref()).map_err(other)
    }

    fn apply_outcome(&mut self, outcome: &VerificationOutcome, signal: bool) {
        let effects = match self.fsm_mut().apply_outcome(outcome) {
            Ok(e) => e,
            Err(e) => return self.error(ErrorCode::VerificationFailed, e.to_string()),
        };
        let check = if outcome.success { String::new() } else { outcome.check.clone() };
        self.emit(EventBody::VerificationResult { step_index: effects.index, success: outcome.success, check, signal });
        self.emit(EventBody::AudioCueSent { cue: effects.cue });
        if outcome.success {
            if effects.activated.is_some() {
                self.on_activated();
            }
            if effects.finished {
                self.finish();
            }
            return;
        }
        match effects.action {
            Some(RevisionAction::ReviseViz(v)) => self.revise(effects.index, v, RevisionReason::Failure),
            Some(RevisionAction::InvokeSubPlan) => self.subplan(effects.index, &outcome.check),
            None => {}
        }
    }

    fn revise(&mut self, index: usize, viz: VizSpec, reason: RevisionReason) {
        let value = viz_to_value(&viz);
        let applied = match reason {
            RevisionReason::Failure => self.fsm_mut().apply_revision(index, viz),
            RevisionReason::Voice => self.fsm_mut().replace_viz(index, viz),
        };
        if let Err(e) = applied {
            return self.error(ErrorCode::InvalidStep, e.to_string());
        }
        self.emit(EventBody::VizRevised { step_index: index, viz: value, reason });
        self.needs_render = true;
        self.refresh_directives();
    }

    fn subplan(&mut self, index: usize, failure: &str) {
        match self.request_subplan(index, failure) {
            Ok(()) => {}
            Err(f) => {
                self.step_failed(ErrorCode::SubPlanFailed, f);
                if self.phase != Phase::Executing {
                    return;
                }
                // Without substeps the step still gets different guidance.
                let current =
                    self.fsm_ref().plan().steps[index].viz.clone().unwrap_or_else(|| VizSpec::outline(WHOLE_VIEW));
                self.revise(index, rotate_viz(&current), RevisionReason::Failure);
            }
        }
    }

    fn request_subplan(&mut self, index: usize, failure: &str) -> Result<(), StepFailure> {
        let image =
            self.frame.as_ref().and_then(|f| f.image.clone()).ok_or_else(|| other("the current frame has no image"))?;
        let plan = self.fsm_ref().plan();
        let step = &plan.steps[index];
        let prompt = self.services.templates.render_subplan_prompt(
            &plan.goal,
            &step.instruction,
            step.viz.as_ref(),
            failure,
            &image,
        );
        let reply = self.call(&prompt)?;
        let draft = parse_subplan_draft(&reply.text).map_err(other)?;
        let range =
            self.fsm_mut().splice_subplan(SubPlan { parent_index: index, substeps: draft.substeps }).map_err(other)?;
        let substeps = self.fsm_ref().plan().steps[range].iter().map(StepView::from).collect();
        self.emit(EventBody::SubPlanInserted { parent: index, substeps });
        self.on_activated();
        Ok(())
    }

    fn fire_signal(&mut self, token: &str) {
        let Some(&id) = self.signals.get(token) else {
            return self.error(ErrorCode::UnknownSignal, format!("no step registered for {token:?}"));
        };
        let fsm = self.fsm_ref();
        let Some(step) = fsm.plan().steps.iter().find(|s| s.id == id) else { return };
        if step.status.is_done() {
            return;
        }
        if fsm.cursor_index() == Some(step.index) && step.status == StepStatus::Active {
            self.fsm_mut().begin_verification().expect("cursor is Active");
            self.apply_outcome(&VerificationOutcome::passed(), true);
        } else {
            self.presatisfied.insert(id);
        }
    }

    fn skip(&mut self, index: usize, reason: String) {
        match self.fsm_mut().skip(index) {
            Ok(effects) => {
                self.emit(EventBody::StepsSkipped { indices: effects.skipped, reason });
                if effects.activated.is_some() {
                    self.on_activated();
                }
                if effects.finished {
                    self.finish();
                }
            }
            Err(e) => self.error(ErrorCode::InvalidStep, e.to_string()),
        }
    }

    fn answer_voice(&mut self, question: &str) {
        let fsm = self.fsm_ref();
        let Some(index) = fsm.cursor_index() else {
            return self.error(ErrorCode::NotExecuting, "no step is running");
        };
        let plan = fsm.plan();
        let step = &plan.steps[index];
        let frame = self.frame.as_ref().and_then(|f| f.image.clone());
        let prompt = self.services.templates.render_voice_prompt(
            &plan.goal,
            &step.instruction,
            step.viz.as_ref(),
            question,
            frame.as_ref(),
        );
        let reply = match self.call(&prompt) {
            Ok(r) => r,
            Err(e @ GatewayError::ReplayMiss(_)) => return self.gateway_failed(ErrorCode::ModelError, e),
            Err(e) => return self.voice_error(e.to_string()),
        };
        match parse_voice_reply(&reply.text) {
            Ok(r) => {
                self.emit(EventBody::VoiceAnswer { text: r.answer, error: None });
                if let Some(viz) = r.updated_viz {
                    self.revise(index, viz, RevisionReason::Voice);
                }
            }
            Err(e) => self.voice_error(e.to_string()),
        }
    }

    fn voice_error(&mut self, detail: String) {
        self.emit(EventBody::VoiceAnswer {
            text: "Sorry, I could not answer that right now.".into(),
            error: Some(detail),
        });
    }
}
