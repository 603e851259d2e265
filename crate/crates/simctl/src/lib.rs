//! Scenario-driven harness for the parking contracts: parse a scenario,
//! run it against a fresh engine, write the event log, the off-chain
//! voucher trace and a funds-flow report.

pub mod report;
pub mod runner;
pub mod scenario;

pub use report::Report;
pub use runner::{RunError, Runner, StepError, TraceRecord};
pub use scenario::{load, parse, validate_scenario, Action, Diagnostic, LoadError, Scenario, Step};
