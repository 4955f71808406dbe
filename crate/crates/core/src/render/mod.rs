//! Turns the active step's visualization spec, resolved anchors and assets
//! into the directive batch a client draws.

mod catalog;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsm::AudioCueKind;
use crate::media::{AssetRef, Mask, MaskShape};
use crate::plan::{ActionViz, ObjectViz, PlanStep, StepId, StepStatus, TaskPlan};
use crate::spatial::{Motion, RotationCue3D, WorldAnchor};

pub use catalog::{AssetCatalog, OverlayFamily, GESTURE_ICONS, TOOL_ICONS};

/// Wire version of [`DirectiveBatch`].
pub const BATCH_VERSION: u32 = 1;
/// Loop period of an animated shape preview, in seconds.
pub const ANIMATION_LOOP_SECONDS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("no anchor resolved for waypoint {0:?}")]
    MissingAnchor(String),
    #[error("no step is active")]
    NoActiveStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum GuidanceDirective {
    Outline {
        label: String,
        anchor: WorldAnchor,
    },
    ShapePreview {
        label: String,
        anchor: WorldAnchor,
        mask: AssetRef,
        shape: MaskShape,
    },
    /// The mask moved along the motion, replacing a separate arrow.
    AnimatedShapePreview {
        label: String,
        mask: AssetRef,
        shape: MaskShape,
        motion: Motion,
        loop_seconds: f64,
        interpolation: Interpolation,
    },
    ArrowTranslation {
        start: WorldAnchor,
        end: WorldAnchor,
    },
    ArrowRotation {
        cue: RotationCue3D,
    },
    GestureOverlay {
        anchor: WorldAnchor,
        token: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        asset: Option<AssetRef>,
        /// Text shown instead of an icon when the token has none.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        badge: Option<String>,
    },
    ToolOverlay {
        anchor: WorldAnchor,
        token: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        asset: Option<AssetRef>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        badge: Option<String>,
    },
    StatePanel {
        goal: String,
        current: String,
        current_status: StepStatus,
        /// Empty when nothing is left after the current step.
        next: String,
    },
    AudioCue {
        cue: AudioCueKind,
    },
    ReferenceImage {
        anchor: WorldAnchor,
        asset: AssetRef,
    },
}

impl GuidanceDirective {
    pub fn kind(&self) -> DirectiveKind {
        use GuidanceDirective as G;
        match self {
            G::Outline { .. } => DirectiveKind::Outline,
            G::ShapePreview { .. } => DirectiveKind::ShapePreview,
            G::AnimatedShapePreview { .. } => DirectiveKind::AnimatedShapePreview,
            G::ArrowTranslation { .. } => DirectiveKind::ArrowTranslation,
            G::ArrowRotation { .. } => DirectiveKind::ArrowRotation,
            G::GestureOverlay { .. } => DirectiveKind::GestureOverlay,
            G::ToolOverlay { .. } => DirectiveKind::ToolOverlay,
            G::StatePanel { .. } => DirectiveKind::StatePanel,
            G::AudioCue { .. } => DirectiveKind::AudioCue,
            G::ReferenceImage { .. } => DirectiveKind::ReferenceImage,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DirectiveKind {
    Outline,
    ShapePreview,
    AnimatedShapePreview,
    ArrowTranslation,
    ArrowRotation,
    GestureOverlay,
    ToolOverlay,
    StatePanel,
    AudioCue,
    ReferenceImage,
}

impl DirectiveKind {
    pub fn is_object_state(self) -> bool {
        matches!(self, DirectiveKind::Outline | DirectiveKind::ShapePreview | DirectiveKind::AnimatedShapePreview)
    }

    pub fn is_action(self) -> bool {
        matches!(
            self,
            DirectiveKind::ArrowTranslation
                | DirectiveKind::ArrowRotation
                | DirectiveKind::GestureOverlay
                | DirectiveKind::ToolOverlay
        )
    }
}

/// Everything drawn for one step. A newer batch for the same step replaces
/// the older one entirely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectiveBatch {
    pub version: u32,
    pub step_id: StepId,
    pub step_index: usize,
    pub directives: Vec<GuidanceDirective>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl DirectiveBatch {
    pub fn kinds(&self) -> Vec<DirectiveKind> {
        self.directives.iter().map(GuidanceDirective::kind).collect()
    }
}

/// Localization results for a step: the object anchor and, when the spec
/// asks for motion, the resolved motion.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResolvedAnchors {
    pub object: Option<WorldAnchor>,
    pub motion: Option<Motion>,
}

/// Media available for a step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepAssets {
    pub mask: Option<Mask>,
    pub reference: Option<AssetRef>,
}

/// State panel for the plan's current step, listing the following pending
/// step (a substep when one is queued) as next.
pub fn render_state_panel(plan: &TaskPlan) -> Result<GuidanceDirective, RenderError> {
    let current = plan.active().ok_or(RenderError::NoActiveStep)?;
    let next = plan.steps[current.index + 1..]
        .iter()
        .find(|s| s.status == StepStatus::Pending)
        .map(|s| s.instruction.clone())
        .unwrap_or_default();
    Ok(GuidanceDirective::StatePanel {
        goal: plan.goal.clone(),
        current: current.instruction.clone(),
        current_status: current.status,
        next,
    })
}

pub fn render_feedback(success: bool) -> GuidanceDirective {
    GuidanceDirective::AudioCue { cue: if success { AudioCueKind::Correct } else { AudioCueKind::Error } }
}

/// The token selecting an overlay icon: the first non-motion action type,
/// else the motion token, else the action viz name.
fn overlay_token(step: &PlanStep, action: ActionViz) -> String {
    let viz = step.viz.as_ref();
    let types = viz.map(|v| v.action_types.as_slice()).unwrap_or_default();
    types
        .iter()
        .find(|t| !matches!(t.as_str(), "translation" | "rotation"))
        .or_else(|| types.first())
        .cloned()
        .unwrap_or_else(|| action.as_str().to_lowercase())
}

fn motion_directive(motion: Motion) -> GuidanceDirective {
    match motion {
        Motion::Translation { start, end } => GuidanceDirective::ArrowTranslation { start, end },
        Motion::Rotation(cue) => GuidanceDirective::ArrowRotation { cue },
    }
}

/// Renders the plan's active step. The batch always starts with the state
/// panel, then one object-state directive, at most one action directive and
/// at most one reference image.
pub fn render_step(
    plan: &TaskPlan,
    anchors: &ResolvedAnchors,
    assets: &StepAssets,
    catalog: &AssetCatalog,
) -> Result<DirectiveBatch, RenderError> {
    let panel = render_state_panel(plan)?;
    let step = plan.active().expect("state panel found the active step");
    let mut warnings = Vec::new();
    let mut directives = vec![panel];

    let viz = step.viz.clone();
    let label = viz.as_ref().and_then(|v| v.primary_object()).unwrap_or(crate::fsm::WHOLE_VIEW).to_string();
    let anchor = anchors.object.clone().ok_or_else(|| RenderError::MissingAnchor(label.clone()))?;
    let object_viz = viz.as_ref().map_or(ObjectViz::Outline, |v| v.object_viz);
    let action_viz = viz.as_ref().and_then(|v| v.action_viz);
    let wants_motion = viz.as_ref().is_some_and(|v| v.needs_rotation || v.needs_translation);

    let mask = match (object_viz, &assets.mask) {
        (ObjectViz::ShapePreview, None) => {
            tracing::warn!(step = step.index, "no mask for shape preview; drawing an outline");
            warnings.push(format!("no mask for {label:?}; shape preview degraded to outline"));
            None
        }
        (ObjectViz::ShapePreview, Some(m)) => Some(m.clone()),
        (ObjectViz::Outline, _) => None,
    };

    let motion = if action_viz == Some(ActionViz::Arrow) {
        if !wants_motion {
            warnings.push("arrow requested without a motion; arrow omitted".into());
            None
        } else {
            let missing = || {
                let v = viz.as_ref().expect("motion implies a viz");
                RenderError::MissingAnchor(if v.needs_rotation { "rotation".into() } else { "endtarget".into() })
            };
            Some(anchors.motion.clone().ok_or_else(missing)?)
        }
    } else {
        None
    };

    match (mask, motion) {
        (Some(m), Some(motion)) => directives.push(GuidanceDirective::AnimatedShapePreview {
            label,
            mask: m.asset,
            shape: m.shape,
            motion,
            loop_seconds: ANIMATION_LOOP_SECONDS,
            interpolation: Interpolation::Linear,
        }),
        (mask, motion) => {
            directives.push(match mask {
                Some(m) => {
                    GuidanceDirective::ShapePreview { label, anchor: anchor.clone(), mask: m.asset, shape: m.shape }
                }
                None => GuidanceDirective::Outline { label, anchor: anchor.clone() },
            });
            if let Some(motion) = motion {
                directives.push(motion_directive(motion));
            }
        }
    }

    if let Some(action @ (ActionViz::Gesture | ActionViz::Tool)) = action_viz {
        let family = if action == ActionViz::Gesture { OverlayFamily::Gesture } else { OverlayFamily::Tool };
        let token = overlay_token(step, action);
        let asset = catalog.lookup(family, &token).cloned();
        let badge = asset.is_none().then(|| token.clone());
        let anchor = anchor.clone();
        directives.push(match family {
            OverlayFamily::Gesture => GuidanceDirective::GestureOverlay { anchor, token, asset, badge },
            OverlayFamily::Tool => GuidanceDirective::ToolOverlay { anchor, token, asset, badge },
        });
    }

    if let Some(asset) = &assets.reference {
        directives.push(GuidanceDirective::ReferenceImage { anchor, asset: asset.clone() });
    }

    Ok(DirectiveBatch { version: BATCH_VERSION, step_id: step.id, step_index: step.index, directives, warnings })
}
