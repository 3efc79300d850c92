//! Distributed joint power and rate control (JPRC) for the uplink of
//! multi-cell NOMA and OFDMA networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: network geometry, path gains and sub-channel allocation.
//! - [`interference`]: interferer sets, effective interference, SINR and rates.
//! - [`jprc`]: the per-user target-rate water-filling and the synchronous
//!   power-control iteration built on it.
//! - [`baselines`]: closed-form water-filling, exhaustive grid search and the
//!   equally-reduced power method used as references.
//! - [`harness`]: Monte-Carlo snapshots, parameter sweeps and scheme comparison.
//! - [`export`]: CSV/JSON writers for all results.

pub mod baselines;
pub mod error;
pub mod export;
pub mod harness;
pub mod interference;
pub mod jprc;
pub mod model;

pub use error::{Error, Result};
pub use interference::{evaluate, PowerMatrix, RateReport};
pub use jprc::{run, JprcParams, RunResult, TargetState};
pub use model::{allocate_subchannels, generate_scenario, Allocation, Scenario, ScenarioConfig, Scheme};
pub use harness::{compare_schemes, run_snapshot, run_sweep, ExperimentConfig, Method, SweepResult, SweepVariable};
