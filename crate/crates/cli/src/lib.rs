//! Experiment harness: training runs over seed lists, evaluation sweeps,
//! correlation analysis of relabelled messages and static plots.

pub mod config;
pub mod correlation;
pub mod eval;
pub mod manifest;
pub mod plot;
pub mod run;
pub mod stats;
pub mod svg;

pub use config::{RunConfig, Variant, VariantSpec};
