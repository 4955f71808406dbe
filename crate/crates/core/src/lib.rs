//! Orchestration engine for step-by-step task guidance in mixed reality.

pub mod digest;
pub mod plan;
pub mod prompt;
pub mod spatial;

pub use digest::Digest;
pub mod fsm;
pub mod gateway;
pub mod harness;
pub mod media;
pub mod render;
pub mod session;
