//! Progressive architecture search over DAG cells by edge shrinking.
//!
//! A cell is a small directed acyclic graph whose nodes carry operations and
//! whose edges carry data flow. Starting from the complete DAG, the search
//! repeatedly scores one-edge-removed variants and keeps the best, trading
//! predicted performance against an analytic resource cost. The crate is split
//! along those lines:
//!
//! - [`topology`]: immutable cell graphs, the graph-to-network mapping rule,
//!   search-space cardinality, JSON/DOT serialization.
//! - [`cost`]: closed-form MAC and parameter counts for mapped cells and for
//!   whole architectures.
//! - [`eval`]: evaluators that turn a cell into a performance number - a
//!   structural surrogate and a desk-scale trainer with reverse-mode autodiff.
//! - [`shrink`]: the shrinking loop itself, candidate sampling, the search
//!   metric, and the k-sweep accounting.
//! - [`builder`]: expansion of a cell into a staged CNN or a recurrent LM.
//! - [`priors`]: classic random-graph baselines (WS/ER/BA) and the comparison
//!   report against a shrink result.
//! - [`selfcheck`]: runtime verification suites (gradients vs. finite
//!   differences, cardinality pins, cost monotonicity, determinism).
//!
//! Everything is deterministic given the seeds in the configs; repeated runs
//! produce byte-identical artifacts.

pub mod builder;
pub mod cost;
pub mod error;
pub mod eval;
pub mod priors;
pub mod rng;
pub mod selfcheck;
pub mod shrink;
pub mod topology;

pub use error::{Error, Result};
