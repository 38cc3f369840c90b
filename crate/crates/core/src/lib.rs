//! Grid-forming inverter simulation with a symmetrical-component virtual
//! oscillator controller and a single-oscillator baseline.

// range checks are written so that NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline_dvoc;
pub mod controller;
pub mod error;
pub mod frames;
pub mod frt;
pub mod nested_control;
pub mod plant;
pub mod runner;
pub mod signals;
pub mod svoc;

pub use error::{Result, SimError};
pub use runner::{run_scenario, RunResult, Scenario};
pub use signals::{Phase, QuadPair, ThreePhase};
