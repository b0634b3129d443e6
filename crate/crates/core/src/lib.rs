//! Lapse-prediction toolkit.

pub mod config;
pub mod dataset;
pub mod synthgen;
pub mod linear;
pub mod resample;
pub mod trees;
pub mod eval;
pub mod varrel;
pub mod model;
pub mod tuning;
