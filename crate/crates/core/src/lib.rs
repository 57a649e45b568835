//! Design-space exploration for chiplet-based spatial accelerators.
//!
//! The crate models a graph of tensor workloads mapped onto a package of
//! specialized chiplets: hierarchical dataflow mapping and reuse, pipelined
//! stage latency and throughput, contention on the in-package network,
//! energy, area and fabrication cost. A two-stage explorer (Gaussian-process
//! Bayesian search over low-dimensional fields, simulated annealing over the
//! high-dimensional ones) co-optimizes chiplet architecture and integration.

pub mod config;
pub mod cost;
pub mod error;
pub mod mapping;
pub mod network;
pub mod perf;
pub mod report;
pub mod search;
pub mod workload;

pub use error::{Error, Infeasible, Result};
