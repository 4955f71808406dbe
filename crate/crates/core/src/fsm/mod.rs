//! The in-task step lifecycle: activation order, verification outcomes, the
//! revise-then-subplan failure policy and substep splicing.

mod policy;

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::{PlanStep, StepId, StepOrigin, StepStatus, TaskPlan, VizSpec};
use crate::prompt::{SubStepDraft, VerificationOutcome};

pub use policy::{rotate_viz, FailurePolicy, FailurePolicyState, RevisionAction};

/// Object name used when a step has no visualization of its own; the whole
/// view is outlined instead of a localized object.
pub const WHOLE_VIEW: &str = "whole view";

pub const MIN_SUBSTEPS: usize = 2;
pub const MAX_SUBSTEPS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FsmError {
    #[error("step {0} does not exist")]
    NoSuchStep(usize),
    #[error("step {index} cannot be activated now")]
    OutOfOrderActivation { index: usize },
    #[error("no step is active")]
    NothingActive,
    #[error("step {index} is {status:?}, expected {expected:?}")]
    WrongStatus { index: usize, status: StepStatus, expected: StepStatus },
    #[error("sub-plan has {0} substeps; at most 5 are allowed")]
    SubPlanTooLarge(usize),
    #[error("sub-plan has {0} substeps; at least 2 are required")]
    SubPlanTooSmall(usize),
    #[error("sub-plan parent {got} is not the active original step")]
    WrongParent { got: usize },
    #[error("step {0} already used its sub-plan")]
    SubPlanExhausted(usize),
    #[error("step {0} is already done")]
    AlreadyDone(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AudioCueKind {
    Correct,
    Error,
}

/// Substeps inserted after a failing original step.
#[derive(Debug, Clone, PartialEq)]
pub struct SubPlan {
    pub parent_index: usize,
    pub substeps: Vec<SubStepDraft>,
}

/// What applying a verification outcome changed.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeEffects {
    pub index: usize,
    pub cue: AudioCueKind,
    /// Steps that became Completed, in order (a last substep, then its parent).
    pub completed: Vec<usize>,
    pub activated: Option<usize>,
    pub action: Option<RevisionAction>,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkipEffects {
    pub skipped: Vec<usize>,
    pub activated: Option<usize>,
    pub finished: bool,
}

/// Step lifecycle over one task plan.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceFsm {
    plan: TaskPlan,
    policy: FailurePolicy,
    failures: BTreeMap<StepId, FailurePolicyState>,
    pending_check: BTreeMap<StepId, String>,
}

impl GuidanceFsm {
    pub fn new(plan: TaskPlan, policy: FailurePolicy) -> Self {
        GuidanceFsm { plan, policy, failures: BTreeMap::new(), pending_check: BTreeMap::new() }
    }

    pub fn plan(&self) -> &TaskPlan {
        &self.plan
    }

    pub fn policy(&self) -> &FailurePolicy {
        &self.policy
    }

    /// The step currently being worked on (a substep while one runs).
    pub fn cursor(&self) -> Option<&PlanStep> {
        self.plan.active().filter(|s| matches!(s.status, StepStatus::Active | StepStatus::AwaitingVerification))
    }

    pub fn cursor_index(&self) -> Option<usize> {
        self.cursor().map(|s| s.index)
    }

    pub fn failure_state(&self, id: StepId) -> FailurePolicyState {
        self.failures.get(&id).copied().unwrap_or_default()
    }

    /// Check text the last failed verification asked for, if any.
    pub fn pending_check(&self, id: StepId) -> &str {
        self.pending_check.get(&id).map_or("", String::as_str)
    }

    pub fn is_finished(&self) -> bool {
        self.plan.is_finished()
    }

    fn step(&self, index: usize) -> Result<&PlanStep, FsmError> {
        self.plan.steps.get(index).ok_or(FsmError::NoSuchStep(index))
    }

    /// Whether `index` may become Active now: it is Pending, every earlier
    /// original step is done, and a substep's parent is Active with all
    /// earlier siblings done.
    pub fn can_activate(&self, index: usize) -> Result<(), FsmError> {
        let step = self.step(index)?;
        if step.status != StepStatus::Pending {
            return Err(FsmError::OutOfOrderActivation { index });
        }
        if let Some(c) = self.cursor_index() {
            // Only the cursor's own substeps may start while something runs.
            let parent = self.plan.owning_original(c).expect("cursor exists");
            let ok = step.origin == StepOrigin::SubStep(parent)
                && self.plan.steps[parent].status == StepStatus::Active
                && c == parent;
            if !ok {
                return Err(FsmError::OutOfOrderActivation { index });
            }
        }
        let blocked = self.plan.steps[..index].iter().any(|s| match step.origin {
            StepOrigin::Original => s.is_original() && !s.status.is_done(),
            StepOrigin::SubStep(p) => {
                (s.is_original() && s.index != p && !s.status.is_done())
                    || (s.origin == step.origin && !s.status.is_done())
            }
        });
        if blocked {
            return Err(FsmError::OutOfOrderActivation { index });
        }
        Ok(())
    }

    pub fn activate(&mut self, index: usize) -> Result<(), FsmError> {
        self.can_activate(index)?;
        self.plan.steps[index].status = StepStatus::Active;
        self.plan.active_index = Some(index);
        Ok(())
    }

    /// Activates the planner's chosen step, or the first pending one.
    pub fn start(&mut self) -> Result<Option<usize>, FsmError> {
        if self.cursor().is_some() {
            return Ok(self.cursor_index());
        }
        let candidate = self
            .plan
            .active_index
            .filter(|&i| self.plan.steps.get(i).is_some_and(|s| s.status == StepStatus::Pending))
            .or_else(|| self.next_pending(0));
        match candidate {
            Some(i) => self.activate(i).map(|_| Some(i)),
            None => Ok(None),
        }
    }

    fn next_pending(&self, from: usize) -> Option<usize> {
        self.plan.steps.iter().skip(from).find(|s| s.status == StepStatus::Pending).map(|s| s.index)
    }

    /// Index of the step the state panel lists after the cursor.
    pub fn upcoming(&self) -> Option<usize> {
        let c = self.cursor_index()?;
        self.next_pending(c + 1)
    }

    /// Moves the cursor step from Active to AwaitingVerification.
    pub fn begin_verification(&mut self) -> Result<usize, FsmError> {
        let index = self.cursor_index().ok_or(FsmError::NothingActive)?;
        let step = &mut self.plan.steps[index];
        if step.status != StepStatus::Active {
            return Err(FsmError::WrongStatus { index, status: step.status, expected: StepStatus::Active });
        }
        step.status = StepStatus::AwaitingVerification;
        Ok(index)
    }

    /// Returns an AwaitingVerification cursor to Active without an outcome
    /// (the verification call failed).
    pub fn abort_verification(&mut self) {
        if let Some(i) = self.cursor_index() {
            if self.plan.steps[i].status == StepStatus::AwaitingVerification {
                self.plan.steps[i].status = StepStatus::Active;
            }
        }
    }

    /// Applies a verification outcome to the AwaitingVerification cursor.
    pub fn apply_outcome(&mut self, outcome: &VerificationOutcome) -> Result<OutcomeEffects, FsmError> {
        let index = self.cursor_index().ok_or(FsmError::NothingActive)?;
        let status = self.plan.steps[index].status;
        if status != StepStatus::AwaitingVerification {
            return Err(FsmError::WrongStatus { index, status, expected: StepStatus::AwaitingVerification });
        }
        let id = self.plan.steps[index].id;
        if outcome.success {
            self.pending_check.remove(&id);
            let completed = self.complete(index);
            let activated = self.advance_from(index, outcome.next_viz.as_ref());
            return Ok(OutcomeEffects {
                index,
                cue: AudioCueKind::Correct,
                completed,
                activated,
                action: None,
                finished: self.is_finished(),
            });
        }

        self.plan.steps[index].status = StepStatus::Active;
        if outcome.check.trim().is_empty() {
            self.pending_check.remove(&id);
        } else {
            self.pending_check.insert(id, outcome.check.trim().to_string());
        }
        let is_original = self.plan.steps[index].is_original();
        let state = self.failures.entry(id).or_default();
        state.failure_count += 1;
        let action = self.policy.decide(state, is_original);
        let action = match action {
            policy::Decision::Revise => {
                let current = self.plan.steps[index].viz.clone().unwrap_or_else(|| VizSpec::outline(WHOLE_VIEW));
                let revised = outcome.revised_viz.clone().unwrap_or_else(|| rotate_viz(&current));
                RevisionAction::ReviseViz(revised)
            }
            policy::Decision::SubPlan => RevisionAction::InvokeSubPlan,
        };
        Ok(OutcomeEffects {
            index,
            cue: AudioCueKind::Error,
            completed: Vec::new(),
            activated: None,
            action: Some(action),
            finished: false,
        })
    }

    /// Marks `index` Completed, and its parent too when it was the parent's
    /// last unfinished substep.
    fn complete(&mut self, index: usize) -> Vec<usize> {
        self.plan.steps[index].status = StepStatus::Completed;
        let mut done = vec![index];
        if let StepOrigin::SubStep(p) = self.plan.steps[index].origin {
            if self.plan.substeps_of(p).all(|s| s.status.is_done()) && !self.plan.steps[p].status.is_done() {
                self.plan.steps[p].status = StepStatus::Completed;
                done.push(p);
            }
        }
        done
    }

    fn advance_from(&mut self, index: usize, next_viz: Option<&VizSpec>) -> Option<usize> {
        let next = self.next_pending(index + 1);
        match next {
            Some(n) => {
                if let (None, Some(v)) = (&self.plan.steps[n].viz, next_viz) {
                    self.plan.steps[n].viz = Some(v.clone());
                }
                self.activate(n).expect("next pending step is activatable");
            }
            None => self.plan.active_index = None,
        }
        next
    }

    /// Replaces a step's visualization after a failure.
    pub fn apply_revision(&mut self, index: usize, viz: VizSpec) -> Result<(), FsmError> {
        let step = self.step(index)?;
        if step.status.is_done() {
            return Err(FsmError::AlreadyDone(index));
        }
        let id = step.id;
        self.plan.steps[index].viz = Some(viz);
        self.failures.entry(id).or_default().revision_cursor += 1;
        Ok(())
    }

    /// Replaces a step's visualization on request (voice answers).
    pub fn replace_viz(&mut self, index: usize, viz: VizSpec) -> Result<(), FsmError> {
        if self.step(index)?.status.is_done() {
            return Err(FsmError::AlreadyDone(index));
        }
        self.plan.steps[index].viz = Some(viz);
        Ok(())
    }

    /// Inserts substeps right after their parent, which stays Active while
    /// the first substep becomes the cursor. Returns the inserted range.
    pub fn splice_subplan(&mut self, sub: SubPlan) -> Result<Range<usize>, FsmError> {
        let n = sub.substeps.len();
        let parent = sub.parent_index;
        let is_cursor_original = self.cursor_index() == Some(parent)
            && self.plan.steps.get(parent).is_some_and(|s| s.is_original() && s.status == StepStatus::Active);
        if !is_cursor_original {
            return Err(FsmError::WrongParent { got: parent });
        }
        if n > MAX_SUBSTEPS {
            return Err(FsmError::SubPlanTooLarge(n));
        }
        if n < MIN_SUBSTEPS {
            return Err(FsmError::SubPlanTooSmall(n));
        }
        let pid = self.plan.steps[parent].id;
        if self.failure_state(pid).subplan_used || self.plan.substeps_of(parent).next().is_some() {
            return Err(FsmError::SubPlanExhausted(parent));
        }
        let parent_viz = self.plan.steps[parent].viz.clone();
        let parent_type = self.plan.steps[parent].step_type;
        let mut new_steps = Vec::with_capacity(n);
        for d in sub.substeps {
            let id = self.plan.fresh_id();
            new_steps.push(PlanStep {
                id,
                index: 0,
                verification_rule: if d.check.trim().is_empty() { d.instruction.clone() } else { d.check },
                instruction: d.instruction,
                viz: d.viz.or_else(|| parent_viz.clone()),
                step_type: parent_type,
                status: StepStatus::Pending,
                origin: StepOrigin::SubStep(parent),
            });
        }
        let at = parent + 1;
        self.plan.steps.splice(at..at, new_steps);
        self.plan.reindex();
        // Parents of later substeps shift by n; none exist before activation,
        // but keep references consistent regardless.
        for s in &mut self.plan.steps[at + n..] {
            if let StepOrigin::SubStep(p) = s.origin {
                if p >= at {
                    s.origin = StepOrigin::SubStep(p + n);
                }
            }
        }
        self.failures.entry(pid).or_default().subplan_used = true;
        self.activate(at).expect("first substep is activatable");
        Ok(at..at + n)
    }

    /// Skips a not-yet-done step by operator command. Skipping the cursor's
    /// original step also skips its unfinished substeps and advances.
    pub fn skip(&mut self, index: usize) -> Result<SkipEffects, FsmError> {
        let step = self.step(index)?;
        if step.status.is_done() {
            return Err(FsmError::AlreadyDone(index));
        }
        let owner = self.plan.owning_original(index).expect("step exists");
        let cursor = self.cursor_index();
        let cursor_owner = cursor.and_then(|c| self.plan.owning_original(c));
        let mut skipped = Vec::new();
        let mut targets = vec![index];
        if step.is_original() {
            targets.extend(self.plan.substeps_of(index).filter(|s| !s.status.is_done()).map(|s| s.index));
        }
        for t in targets {
            self.plan.steps[t].status = StepStatus::Skipped;
            skipped.push(t);
        }
        let mut activated = None;
        let affects_cursor = cursor.is_some_and(|c| skipped.contains(&c));
        if affects_cursor {
            // A skipped last substep completes its parent like a success would.
            if Some(owner) == cursor_owner && owner != index && self.plan.substeps_of(owner).all(|s| s.status.is_done())
            {
                self.plan.steps[owner].status = StepStatus::Completed;
            }
            activated = self.advance_from(cursor.expect("cursor exists"), None);
        }
        Ok(SkipEffects { skipped, activated, finished: self.is_finished() })
    }

    /// Checks the structural invariants; used by tests and debug assertions.
    pub fn check_invariants(&self) -> Result<(), String> {
        let live: Vec<&PlanStep> = self
            .plan
            .steps
            .iter()
            .filter(|s| matches!(s.status, StepStatus::Active | StepStatus::AwaitingVerification))
            .collect();
        match live.as_slice() {
            [] => {}
            [one] => {
                if self.plan.active_index != Some(one.index) {
                    return Err(format!("active_index {:?} but step {} is live", self.plan.active_index, one.index));
                }
            }
            [a, b] => {
                let ok = a.is_original()
                    && a.status == StepStatus::Active
                    && b.origin == StepOrigin::SubStep(a.index)
                    && self.plan.active_index == Some(b.index);
                if !ok {
                    return Err(format!("steps {} and {} are both live", a.index, b.index));
                }
            }
            more => return Err(format!("{} live steps", more.len())),
        }
        for s in &self.plan.steps {
            if let StepOrigin::SubStep(p) = s.origin {
                let parent = self.plan.steps.get(p).ok_or(format!("substep {} has no parent {p}", s.index))?;
                if !parent.is_original() || p >= s.index {
                    return Err(format!("substep {} references bad parent {p}", s.index));
                }
            }
            if s.index >= self.plan.steps.len() || self.plan.steps[s.index].id != s.id {
                return Err(format!("index of step {:?} is stale", s.id));
            }
        }
        for (p, _) in self.plan.steps.iter().enumerate().filter(|(_, s)| s.is_original()) {
            let n = self.plan.substeps_of(p).count();
            if n != 0 && !(MIN_SUBSTEPS..=MAX_SUBSTEPS).contains(&n) {
                return Err(format!("step {p} has {n} substeps"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
