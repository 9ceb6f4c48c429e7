//! Synthesis and evaluation of hidden-trigger tool-compromise episodes.
//!
//! The crate covers the full pipeline: seeded red/blue pair generation
//! ([`generator`]), the episode data model and JSONL codec ([`episode`],
//! [`codec`]), trajectory/final-action featurization ([`features`]),
//! pluggable risk scorers ([`scorers`]), the safety-utility metric suite
//! ([`metrics`]), and grouped-fold evaluation with train-only threshold
//! calibration ([`harness`]).

pub mod catalogue;
pub mod codec;
pub mod config;
pub mod diagnostics;
pub mod episode;
pub mod features;
pub mod generator;
pub mod harness;
pub mod metrics;
pub mod perturb;
pub mod report;
pub mod rng;
pub mod scorers;
pub mod studies;

/// Version string recorded in run manifests.
pub const TOOL_VERSION: &str = concat!("trustbench ", env!("CARGO_PKG_VERSION"));
