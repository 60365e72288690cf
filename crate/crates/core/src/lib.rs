//! Hierarchical grid reliability management.
//!
//! A day-ahead layer picks which generators are committed for the next day;
//! a real-time layer realises demand, wind and line failures hour by hour
//! and scores every post-redispatch state by its N-1 pass rate under a DC
//! power flow. The learning module searches day-ahead policies with the
//! cross-entropy method, ranking candidates by TD(0) value functions learned
//! on the real-time layer.

pub mod config;
pub mod env;
pub mod features;
pub mod grid;
pub mod harness;
pub mod injection;
pub mod learning;
pub mod parallel;
pub mod powerflow;
pub mod rng;
pub mod text;

pub use config::{Config, LearningConfig, ScenarioConfig};
pub use grid::GridCase;
