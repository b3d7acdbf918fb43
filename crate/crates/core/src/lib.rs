//! Discrete-event simulator for failure-aware routing in LEO satellite
//! constellations.
//!
//! A run builds a Walker constellation and its time-varying link structure,
//! partitions it into segments, injects failures, routes burst traffic under
//! one of four failure-awareness paradigms and reports per-message records
//! and aggregate summaries.

pub mod awareness;
pub mod batch;
pub mod config;
pub mod constellation;
pub mod engine;
pub mod metrics;
pub mod routing;
pub mod scenario;
pub mod segmentation;
pub mod topology;

pub use awareness::Paradigm;
pub use config::{parse_config, preset, ConfigError, FailureModel, RunConfig};
pub use engine::{run, run_prepared, EngineError, Prepared, RunOutput};
pub use metrics::{MessageRecord, RunSummary};
