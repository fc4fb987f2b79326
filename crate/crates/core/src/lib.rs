//! Small Language Graph: isolated per-subsection experts behind a routing
//! orchestrator, with the dataset pipeline and metrics used to evaluate them.
//!
//! The pipeline runs corpus → dataset → graph → eval, and `experiment` wraps
//! it in hyperparameter sweeps whose training half lives outside this crate.

pub mod backends;
pub mod corpus;
pub mod dataset;
pub mod eval;
pub mod experiment;
pub mod graph;
pub mod util;
