//! Inputs shared by the benchmarks.

use xrguide_core::fsm::{FailurePolicy, GuidanceFsm};
use xrguide_core::plan::{StepType, TaskPlan, VizSpec};
use xrguide_core::prompt::SubStepDraft;
use xrguide_core::spatial::{CameraFrame, DepthMap, Intrinsics, Pose};

/// A complete planner document for turning on a gas stove.
pub const GAS_KNOB: &str = include_str!("../../core/tests/data/gas_knob.json");

pub fn camera() -> CameraFrame {
    CameraFrame {
        image: None,
        width: 1280,
        height: 960,
        intrinsics: Intrinsics { fx: 1100.0, fy: 1100.0, cx: 640.0, cy: 480.0 },
        pose: Pose::identity(),
        depth: DepthMap::Constant(0.9),
        timestamp: 0.0,
    }
}

/// A started FSM over `n` original steps.
pub fn started_fsm(n: usize) -> GuidanceFsm {
    let mut plan = TaskPlan::new("Assemble a bookshelf");
    for i in 0..n {
        let idx = plan.push_original(format!("step {i}"), StepType::R2R, format!("check {i}"));
        plan.steps[idx].viz = Some(VizSpec::outline("shelf"));
    }
    let mut fsm = GuidanceFsm::new(plan, FailurePolicy::default());
    fsm.start().expect("plan has steps");
    fsm
}

pub fn drafts(n: usize) -> Vec<SubStepDraft> {
    (0..n)
        .map(|i| SubStepDraft { instruction: format!("part {i}"), check: format!("part {i} done"), viz: None })
        .collect()
}
