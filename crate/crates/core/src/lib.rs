//! Rule-compliant trajectory repair.

pub mod abstraction;
pub mod criticality;
pub mod engine;
pub mod mpr;
pub mod predicates;
pub mod reach;
pub mod repair_opt;
pub mod scenarios;
pub mod sat;
pub mod stl;
pub mod world_model;

pub use engine::{repair, repair_with, run_batch, EngineConfig, RepairOutcome, RepairReport};
pub use predicates::RuleLibrary;
pub use stl::{Formula, Tv};
pub use world_model::{Input, Scenario, Span, State, Trajectory};
