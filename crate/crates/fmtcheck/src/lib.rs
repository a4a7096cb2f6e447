//! Dependability analysis of fault trees extended with degradation and
//! maintenance: model parsing and validation, compilation to labelled CTMCs,
//! transient numerical analysis, Monte Carlo simulation, and a
//! decomposition-based abstraction for large systems.

pub mod analysis;
pub mod cli;
pub mod ctmc;
pub mod decomposition;
pub mod duration;
pub mod model;
pub mod report;
pub mod semantics;
pub mod simulate;
