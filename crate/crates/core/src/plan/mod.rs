//! Plans, steps and visualization specs, plus strict parsing of the planner
//! JSON documents.

mod doc;
pub mod extract;
pub(crate) mod schema;
mod viz;

use serde::{Deserialize, Serialize};

pub use doc::{
    parse_plan_document, parse_viz_value, resolve_next, viz_to_value, NextRef, PlanError, PlannerResponse,
    PlannerResponseDoc, SUBSTEP_SEPARATOR,
};
pub use viz::{
    validate_viz, ActionViz, ObjectViz, ViolationCode, VizSpec, VizViolation, Waypoint, WaypointKind,
    BANNED_OBJECT_NAMES,
};

/// Whether a step's referent or action lives in the physical or virtual world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DomainTag {
    Real,
    Virtual,
}

/// Cross-reality step category: (referent domain) to (action domain).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StepType {
    R2R,
    R2V,
    V2R,
    V2V,
}

impl StepType {
    pub const ALL: [StepType; 4] = [StepType::R2R, StepType::R2V, StepType::V2R, StepType::V2V];
}

pub fn classify_step(referent: DomainTag, action: DomainTag) -> StepType {
    use DomainTag::*;
    match (referent, action) {
        (Real, Real) => StepType::R2R,
        (Real, Virtual) => StepType::R2V,
        (Virtual, Real) => StepType::V2R,
        (Virtual, Virtual) => StepType::V2V,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepStatus {
    Pending,
    Active,
    AwaitingVerification,
    Completed,
    /// Passed over by an explicit operator command.
    Skipped,
    Failed,
}

impl StepStatus {
    /// Terminal statuses never change again.
    pub fn is_done(self) -> bool {
        matches!(self, StepStatus::Completed | StepStatus::Skipped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "parent")]
pub enum StepOrigin {
    Original,
    /// Inserted by sub-planning; carries the index of its original parent.
    SubStep(usize),
}

/// Stable identity of a step, unchanged by splicing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StepId(pub u32);

#[derive(Debug, Clone, PartialEq)]
pub struct PlanStep {
    pub id: StepId,
    pub index: usize,
    pub instruction: String,
    pub viz: Option<VizSpec>,
    pub verification_rule: String,
    pub step_type: StepType,
    pub status: StepStatus,
    pub origin: StepOrigin,
}

impl PlanStep {
    pub fn is_original(&self) -> bool {
        self.origin == StepOrigin::Original
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "warning", rename_all = "snake_case")]
pub enum PlanWarning {
    /// The planner is asked for 3 to 12 steps; the plan is kept anyway.
    PlanSizeOutOfRange { original_steps: usize },
    /// No domain tags were available for this step, so R2R was assumed.
    StepTypeDefaulted { index: usize },
}

pub const MIN_PLAN_STEPS: usize = 3;
pub const MAX_PLAN_STEPS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskPlan {
    pub goal: String,
    pub steps: Vec<PlanStep>,
    pub active_index: Option<usize>,
    pub warnings: Vec<PlanWarning>,
    next_id: u32,
}

impl TaskPlan {
    pub fn new(goal: impl Into<String>) -> Self {
        TaskPlan { goal: goal.into(), steps: Vec::new(), active_index: None, warnings: Vec::new(), next_id: 0 }
    }

    /// Appends a pending original step and returns its index.
    pub fn push_original(
        &mut self,
        instruction: impl Into<String>,
        step_type: StepType,
        verification_rule: impl Into<String>,
    ) -> usize {
        let index = self.steps.len();
        let id = self.fresh_id();
        self.steps.push(PlanStep {
            id,
            index,
            instruction: instruction.into(),
            viz: None,
            verification_rule: verification_rule.into(),
            step_type,
            status: StepStatus::Pending,
            origin: StepOrigin::Original,
        });
        index
    }

    pub(crate) fn fresh_id(&mut self) -> StepId {
        let id = StepId(self.next_id);
        self.next_id += 1;
        id
    }

    pub fn original_count(&self) -> usize {
        self.steps.iter().filter(|s| s.is_original()).count()
    }

    pub fn original_ids(&self) -> Vec<StepId> {
        self.steps.iter().filter(|s| s.is_original()).map(|s| s.id).collect()
    }

    pub fn active(&self) -> Option<&PlanStep> {
        self.active_index.and_then(|i| self.steps.get(i))
    }

    pub fn active_mut(&mut self) -> Option<&mut PlanStep> {
        self.active_index.and_then(|i| self.steps.get_mut(i))
    }

    /// Index of the original step that owns `index` (itself for originals).
    pub fn owning_original(&self, index: usize) -> Option<usize> {
        match self.steps.get(index)?.origin {
            StepOrigin::Original => Some(index),
            StepOrigin::SubStep(parent) => Some(parent),
        }
    }

    pub fn substeps_of(&self, parent: usize) -> impl Iterator<Item = &PlanStep> {
        self.steps.iter().filter(move |s| s.origin == StepOrigin::SubStep(parent))
    }

    pub fn is_finished(&self) -> bool {
        !self.steps.is_empty() && self.steps.iter().all(|s| s.status.is_done())
    }

    pub(crate) fn reindex(&mut self) {
        for (i, s) in self.steps.iter_mut().enumerate() {
            s.index = i;
        }
    }

    /// Flags a plan whose original step count falls outside 3..=12.
    pub(crate) fn check_size(&mut self) {
        let n = self.original_count();
        if !(MIN_PLAN_STEPS..=MAX_PLAN_STEPS).contains(&n) {
            self.warnings.push(PlanWarning::PlanSizeOutOfRange { original_steps: n });
        }
    }
}
