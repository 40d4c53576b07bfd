//! Comprehensive symbolic regression over time-series tables.
//!
//! For every variable of a dataset, a batch of independent genetic-programming
//! runs evolves regression models from the remaining variables (optionally
//! lagged). Variable relevance is measured by reference frequency across whole
//! runs and condensed into a directed variable interaction network: an edge
//! `a -> b` means `a` is among the top-k most relevant inputs for modeling `b`.
//!
//! The crate is organized along the pipeline:
//!
//! * [`dataset`] — CSV ingestion, five-point derivative transform, lagging,
//!   train/validation/test partitioning
//! * [`expression`] — symbolic model trees and their evaluation
//! * [`evolution`] — a single GP run (PTC2 init, tournament selection,
//!   subtree crossover, mutation, dynamic depth limits, Spearman stopping)
//! * [`relevance`] — frequency-based variable relevance and cross-run
//!   aggregation
//! * [`network`] — interaction-network construction and DOT export
//! * [`orchestrator`] — the multi-run batch driver behind the `csr` binary

pub mod dataset;
pub mod evolution;
pub mod expression;
pub mod network;
pub mod orchestrator;
pub mod relevance;
pub mod stats;
