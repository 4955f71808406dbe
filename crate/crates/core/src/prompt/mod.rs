//! Prompt templates, rendering with runtime context, and parsing of the
//! model's answers into domain types.

mod answers;
mod synth;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::Digest;
use crate::plan::extract::ExtractError;
use crate::plan::schema::{IntError, Violation};
use crate::plan::{viz_to_value, PlanError, PlanStep, PlannerResponseDoc, StepStatus, VizSpec, VizViolation};

pub use answers::{
    parse_relevance_answer, parse_rotation_answer, parse_subplan_draft, parse_transform_answer,
    parse_verification_response, parse_voice_reply, LocalizationAnswer, RelevanceAnswer, RotationAnswer, SubPlanDraft,
    SubStepDraft, TransformAnswer, TransformEntry, TransformKind, VerificationOutcome, VoiceReply,
};
pub use synth::{domain_tags_from_doc, synthesize_plan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PromptKind {
    InitialPlan,
    DuringTask,
    RotationLocalize,
    TransformLocalize,
    RelevanceScore,
    VoiceAnswer,
    /// Breaking a failing step into substeps.
    SubPlan,
}

impl PromptKind {
    pub const ALL: [PromptKind; 7] = [
        PromptKind::InitialPlan,
        PromptKind::DuringTask,
        PromptKind::RotationLocalize,
        PromptKind::TransformLocalize,
        PromptKind::RelevanceScore,
        PromptKind::VoiceAnswer,
        PromptKind::SubPlan,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::InitialPlan => "InitialPlan",
            PromptKind::DuringTask => "DuringTask",
            PromptKind::RotationLocalize => "RotationLocalize",
            PromptKind::TransformLocalize => "TransformLocalize",
            PromptKind::RelevanceScore => "RelevanceScore",
            PromptKind::VoiceAnswer => "VoiceAnswer",
            PromptKind::SubPlan => "SubPlan",
        }
    }

    /// Template file name inside a template directory.
    pub fn file_name(self) -> &'static str {
        match self {
            PromptKind::InitialPlan => "initial_plan.txt",
            PromptKind::DuringTask => "during_task.txt",
            PromptKind::RotationLocalize => "rotation.txt",
            PromptKind::TransformLocalize => "transform.txt",
            PromptKind::RelevanceScore => "relevance.txt",
            PromptKind::VoiceAnswer => "voice.txt",
            PromptKind::SubPlan => "subplan.txt",
        }
    }

    /// Substitution variables the template must contain.
    pub fn variables(self) -> &'static [&'static str] {
        match self {
            PromptKind::InitialPlan => &["userGoal"],
            PromptKind::DuringTask => &["instruction", "verificationRule", "pendingCheck", "priorResponse"],
            PromptKind::RotationLocalize | PromptKind::TransformLocalize => &["objectName"],
            PromptKind::RelevanceScore => &["goal", "instruction"],
            PromptKind::VoiceAnswer => &["goal", "instruction", "currentViz", "question"],
            PromptKind::SubPlan => &["goal", "instruction", "currentViz", "failure"],
        }
    }
}

impl std::fmt::Display for PromptKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A fully rendered prompt ready for the gateway.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub kind: PromptKind,
    pub text: String,
    pub attachments: Vec<Digest>,
    pub context_hash: Digest,
}

impl RenderedPrompt {
    pub fn new(kind: PromptKind, text: String, attachments: Vec<Digest>) -> Self {
        let context_hash = context_hash(kind, &text, &attachments);
        RenderedPrompt { kind, text, attachments, context_hash }
    }
}

/// Digest over the kind, text and attachment digests, each length-prefixed.
pub fn context_hash(kind: PromptKind, text: &str, attachments: &[Digest]) -> Digest {
    let parts = [kind.as_str().as_bytes(), text.as_bytes()]
        .into_iter()
        .chain(attachments.iter().map(|d| d.as_str().as_bytes()));
    Digest::of_parts(parts)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PromptError {
    #[error("user goal is empty")]
    EmptyGoal,
    #[error("object name is empty")]
    EmptyObjectName,
    #[error("at least one frame is required")]
    NoFrames,
    #[error("no prior planner response to verify against")]
    MissingPriorResponse,
    #[error("step {0} is not awaiting verification")]
    StepNotAwaitingVerification(usize),
    #[error("no JSON found in model output")]
    NoJsonFound,
    #[error("schema violation at {path}: {reason}")]
    SchemaViolation { path: String, reason: String },
    #[error("value {value} at {path} is out of range")]
    OutOfRange { path: String, value: f64 },
    #[error("`next` ({0:?}) matches no step")]
    AmbiguousNext(String),
    #[error("invalid visualization spec: {0:?}")]
    InvalidViz(Vec<VizViolation>),
}

impl From<PlanError> for PromptError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::NoJsonFound => PromptError::NoJsonFound,
            PlanError::SchemaViolation { path, reason } => PromptError::SchemaViolation { path, reason },
            PlanError::AmbiguousNext(n) => PromptError::AmbiguousNext(n),
        }
    }
}

impl From<Violation> for PromptError {
    fn from(v: Violation) -> Self {
        PromptError::SchemaViolation { path: v.path, reason: v.reason }
    }
}

impl From<ExtractError> for PromptError {
    fn from(e: ExtractError) -> Self {
        PlanError::from(e).into()
    }
}

impl From<IntError> for PromptError {
    fn from(e: IntError) -> Self {
        match e {
            IntError::Type(v) => v.into(),
            IntError::OutOfRange { path, value } => PromptError::OutOfRange { path, value },
        }
    }
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("reading template {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("template {kind} lacks the {{{var}}} placeholder")]
    MissingVariable { kind: PromptKind, var: &'static str },
}

/// The loaded prompt templates, one per kind.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<PromptKind, String>,
}

fn builtin_text(kind: PromptKind) -> &'static str {
    match kind {
        PromptKind::InitialPlan => include_str!("../../templates/initial_plan.txt"),
        PromptKind::DuringTask => include_str!("../../templates/during_task.txt"),
        PromptKind::RotationLocalize => include_str!("../../templates/rotation.txt"),
        PromptKind::TransformLocalize => include_str!("../../templates/transform.txt"),
        PromptKind::RelevanceScore => include_str!("../../templates/relevance.txt"),
        PromptKind::VoiceAnswer => include_str!("../../templates/voice.txt"),
        PromptKind::SubPlan => include_str!("../../templates/subplan.txt"),
    }
}

/// Replaces `{var}` placeholders in one pass; braces that do not spell a
/// known variable (the JSON examples) are left alone.
fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos + 1..];
        let hit = vars.iter().find(|(k, _)| tail.strip_prefix(*k).is_some_and(|after| after.starts_with('}')));
        match hit {
            Some((k, v)) => {
                out.push_str(v);
                rest = &tail[k.len() + 1..];
            }
            None => {
                out.push('{');
                rest = tail;
            }
        }
    }
    out.push_str(rest);
    out
}

fn viz_block(viz: Option<&VizSpec>) -> String {
    match viz {
        Some(v) => serde_json::to_string_pretty(&viz_to_value(v)).expect("JSON values serialize"),
        None => "null".into(),
    }
}

impl TemplateSet {
    /// The templates compiled into the binary.
    pub fn builtin() -> Self {
        let templates = PromptKind::ALL.iter().map(|&k| (k, builtin_text(k).to_string())).collect();
        TemplateSet { templates }
    }

    /// Loads templates from a directory; kinds without a file keep the
    /// built-in text.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::builtin();
        for kind in PromptKind::ALL {
            let path = dir.join(kind.file_name());
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path)
                .map_err(|source| TemplateError::Io { path: path.display().to_string(), source })?;
            set.templates.insert(kind, text);
        }
        set.check()?;
        Ok(set)
    }

    fn check(&self) -> Result<(), TemplateError> {
        for (&kind, text) in &self.templates {
            for &var in kind.variables() {
                if !text.contains(&format!("{{{var}}}")) {
                    return Err(TemplateError::MissingVariable { kind, var });
                }
            }
        }
        Ok(())
    }

    pub fn raw(&self, kind: PromptKind) -> &str {
        &self.templates[&kind]
    }

    fn render(&self, kind: PromptKind, vars: &[(&str, &str)], attachments: Vec<Digest>) -> RenderedPrompt {
        RenderedPrompt::new(kind, fill(self.raw(kind), vars), attachments)
    }

    pub fn render_initial_prompt(
        &self,
        user_goal: &str,
        reference_images: &[Digest],
    ) -> Result<RenderedPrompt, PromptError> {
        let goal = user_goal.trim();
        if goal.is_empty() {
            return Err(PromptError::EmptyGoal);
        }
        Ok(self.render(PromptKind::InitialPlan, &[("userGoal", goal)], reference_images.to_vec()))
    }

    /// Verification prompt for `active`. `prior` is the planner document
    /// whose `plannerResponse` describes this step; `pending_check` is what
    /// the previous verification asked to look at, if anything.
    pub fn render_during_task_prompt(
        &self,
        active: &PlanStep,
        prior: Option<&PlannerResponseDoc>,
        pending_check: &str,
        frame: &Digest,
    ) -> Result<RenderedPrompt, PromptError> {
        if active.status != StepStatus::AwaitingVerification {
            return Err(PromptError::StepNotAwaitingVerification(active.index));
        }
        let prior = prior.ok_or(PromptError::MissingPriorResponse)?;
        let response = serde_json::to_string_pretty(&prior.response.to_value()).expect("JSON values serialize");
        let check_line = if pending_check.trim().is_empty() {
            String::new()
        } else {
            format!("Still to check from the previous photo: {}", pending_check.trim())
        };
        let rule = if active.verification_rule.trim().is_empty() {
            active.instruction.as_str()
        } else {
            active.verification_rule.as_str()
        };
        let mut text = fill(
            self.raw(PromptKind::DuringTask),
            &[
                ("instruction", &active.instruction),
                ("verificationRule", rule),
                ("pendingCheck", &check_line),
                ("priorResponse", &response),
            ],
        );
        if check_line.is_empty() {
            text = text.replace("\n\n\nExisting plannerResponse", "\n\nExisting plannerResponse");
        }
        Ok(RenderedPrompt::new(PromptKind::DuringTask, text, vec![frame.clone()]))
    }

    fn localize(&self, kind: PromptKind, object_name: &str, frames: &[Digest]) -> Result<RenderedPrompt, PromptError> {
        let name = object_name.trim();
        if name.is_empty() {
            return Err(PromptError::EmptyObjectName);
        }
        if frames.is_empty() {
            return Err(PromptError::NoFrames);
        }
        Ok(self.render(kind, &[("objectName", name)], frames.to_vec()))
    }

    /// Rotation localization; the first frame sets up the axes and the last
    /// is the reference for the target state.
    pub fn render_rotation_prompt(&self, object_name: &str, frames: &[Digest]) -> Result<RenderedPrompt, PromptError> {
        self.localize(PromptKind::RotationLocalize, object_name, frames)
    }

    pub fn render_transform_prompt(&self, object_name: &str, frames: &[Digest]) -> Result<RenderedPrompt, PromptError> {
        self.localize(PromptKind::TransformLocalize, object_name, frames)
    }

    pub fn render_relevance_prompt(&self, goal: &str, instruction: &str, image: &Digest) -> RenderedPrompt {
        self.render(PromptKind::RelevanceScore, &[("goal", goal), ("instruction", instruction)], vec![image.clone()])
    }

    pub fn render_voice_prompt(
        &self,
        goal: &str,
        instruction: &str,
        viz: Option<&VizSpec>,
        question: &str,
        frame: Option<&Digest>,
    ) -> RenderedPrompt {
        let viz = viz_block(viz);
        self.render(
            PromptKind::VoiceAnswer,
            &[("goal", goal), ("instruction", instruction), ("currentViz", &viz), ("question", question)],
            frame.cloned().into_iter().collect(),
        )
    }

    pub fn render_subplan_prompt(
        &self,
        goal: &str,
        instruction: &str,
        viz: Option<&VizSpec>,
        failure: &str,
        frame: &Digest,
    ) -> RenderedPrompt {
        let viz = viz_block(viz);
        let failure = if failure.trim().is_empty() { "none given" } else { failure.trim() };
        self.render(
            PromptKind::SubPlan,
            &[("goal", goal), ("instruction", instruction), ("currentViz", &viz), ("failure", failure)],
            vec![frame.clone()],
        )
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}
