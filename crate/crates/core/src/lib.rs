//! Desk-scale grid simulator plus sequence-model surrogates trained on its traces.
//!
//! The pipeline runs in stages:
//!
//! 1. [`platform`] and [`workload`] describe what to simulate.
//! 2. [`sim`] executes a workload on a platform with a flow-level, fair-share
//!    network model and emits one [`sim::TraceRecord`] per job.
//! 3. [`trace_io`] persists workloads and traces and joins them into model rows.
//! 4. [`preprocess`] standardizes rows and cuts them into padded windows.
//! 5. [`nn`] holds the BiGRU, BiLSTM and encoder-only transformer surrogates,
//!    [`train`] fits them and searches hyperparameters.
//! 6. [`eval`] scores predictions (R², KDE) and compares runtimes.

pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod eval;
pub mod nn;
pub mod pipeline;
pub mod platform;
pub mod preprocess;
pub mod rng;
pub mod sim;
pub mod trace_io;
pub mod train;
pub mod workload;

pub use error::{Error, Result};
pub use platform::{builtin_platform, parse_platform, PlatformSpec};
pub use workload::{generate_workload, scenario_suite, Scenario};
