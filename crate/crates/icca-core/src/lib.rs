//! Compiler-scheduler and event-driven simulator for inter-core connected
//! AI (ICCA) chips that pair large distributed SRAM with off-chip HBM.
//!
//! The pipeline: load a model graph and a chip description, enumerate
//! partition plans and preload-state plans per operator, reduce them to
//! Pareto frontiers, then derive preload numbers and per-operator memory
//! splits by backward induction over the operator sequence. Optionally the
//! preload order of HBM-heavy operators is permuted and the best order kept.
//! The resulting end-to-end plan can be replayed on an event-driven chip
//! simulator at tile granularity, and compared against baseline schedulers.

pub mod alloc;
pub mod baselines;
pub mod cost;
pub mod driver;
pub mod error;
pub mod hw;
pub mod model;
pub mod order;
pub mod plans;
pub mod schedule;
pub mod sim;
pub mod synth;

pub use error::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
