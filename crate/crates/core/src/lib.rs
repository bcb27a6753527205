//! Linear battery energy storage formulations with a self-contained
//! LP/QP/MILP solver layer and an experiment harness for set-point
//! tracking and transmission expansion planning studies.

pub mod optmodel;
pub mod solver;
pub mod bess;
pub mod instances;
pub mod problems;
pub mod metrics;
pub mod cli;
