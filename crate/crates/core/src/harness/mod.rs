//! Scenario-driven headless runs and the offline evaluation fold.

mod eval;
mod frames;
mod scenario;

use thiserror::Error;

use crate::gateway::GatewayError;

pub use eval::{
    eval_report, percent_tenths, CallLabel, Cell, CountRow, EvalReport, Labels, LocalizationTable, LocalizationType,
    StepLabel, TypeRow,
};
pub use frames::{thumbnail, DepthSpec, FrameSpec, PlaneSpec};
pub use scenario::{
    run_scenario, Coverage, Expectation, FixtureMode, RunMetrics, RunOptions, Scenario, ScenarioReport, ScriptAction,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    ScenarioInvalid(String),
    #[error("io: {0}")]
    Io(String),
    #[error("fixture: {0}")]
    Fixture(#[from] GatewayError),
    #[error("labels: {0}")]
    Labels(String),
    #[error("label mismatch: {0}")]
    LabelMismatch(String),
}
