//! Desk-scale observability stack: instrumented services emit spans, logs and
//! metrics over a line protocol; a collector reconstructs and samples traces;
//! a metrics service aggregates tag-keyed time series; analysis helpers render
//! waterfalls, critical paths and RED/USE views.
//!
//! Everything in this crate is deterministic when driven by a [`clock::ManualClock`]
//! and a seeded [`rng::SplitMix64`], which is how the simulator and the test
//! suites run it.

pub mod analysis;
pub mod clock;
pub mod collector;
pub mod context;
pub mod infra;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod sdk;
pub mod sim;
pub mod wire;

#[cfg(not(target_arch = "wasm32"))]
pub mod net;
