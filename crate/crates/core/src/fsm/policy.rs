use serde::{Deserialize, Serialize};

use crate::plan::{validate_viz, ActionViz, ObjectViz, VizSpec};

/// Per-step failure bookkeeping. The counter never resets, not even after a
/// revision.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailurePolicyState {
    pub failure_count: u32,
    pub revision_cursor: u32,
    pub subplan_used: bool,
}

/// How to react to a failed verification.
#[derive(Debug, Clone, PartialEq)]
pub enum RevisionAction {
    ReviseViz(VizSpec),
    InvokeSubPlan,
}

/// Revise on early failures, sub-plan once when the failure count reaches
/// `subplan_at`, revise again afterwards. Substeps are only ever revised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailurePolicy {
    pub subplan_at: u32,
    pub allow_subplan: bool,
}

impl Default for FailurePolicy {
    fn default() -> Self {
        FailurePolicy { subplan_at: 2, allow_subplan: true }
    }
}

pub(super) enum Decision {
    Revise,
    SubPlan,
}

impl FailurePolicy {
    pub(super) fn decide(&self, state: &FailurePolicyState, is_original: bool) -> Decision {
        if is_original && self.allow_subplan && !state.subplan_used && state.failure_count >= self.subplan_at {
            Decision::SubPlan
        } else {
            Decision::Revise
        }
    }
}

fn next_object(v: ObjectViz) -> ObjectViz {
    match v {
        ObjectViz::Outline => ObjectViz::ShapePreview,
        ObjectViz::ShapePreview => ObjectViz::Outline,
    }
}

fn next_action(v: ActionViz) -> ActionViz {
    match v {
        ActionViz::Arrow => ActionViz::Gesture,
        ActionViz::Gesture => ActionViz::Tool,
        ActionViz::Tool => ActionViz::Arrow,
    }
}

/// The next visualization in the fixed rotation: the object view flips
/// between Outline and ShapePreview and the action view cycles
/// Arrow, Gesture, Tool. Action choices that would make the spec invalid are
/// passed over.
pub fn rotate_viz(current: &VizSpec) -> VizSpec {
    let mut out = current.clone();
    out.object_viz = next_object(current.object_viz);
    if let Some(a) = current.action_viz {
        let mut candidate = next_action(a);
        for _ in 0..3 {
            out.action_viz = Some(candidate);
            if validate_viz(&out).is_empty() {
                break;
            }
            candidate = next_action(candidate);
        }
    }
    out
}
