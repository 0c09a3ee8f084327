//! Command-line front end for change-plane subgroup analysis: run
//! configuration, CSV ingestion with column roles, subcommand
//! implementations, and result serialization.
//!
//! Reproducibility contract: every run is driven by a single seed. The `fit`
//! and `report` paths use it directly for the one chain they touch; `tau-grid`
//! derives one child seed per grid point from (seed, domain, index); and
//! `simulate` derives per-replicate data and chain seeds the same way inside
//! the study runner. Repeating any invocation with the same inputs and seed
//! reproduces every output file byte for byte.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod errors;
pub mod jsonout;
pub mod tables;
