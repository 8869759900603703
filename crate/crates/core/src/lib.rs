//! Green-aware deployment constraint generation.
//!
//! Monitoring data (per-flavour energy, inter-service traffic, per-node carbon
//! intensity) is turned into ranked `avoidNode` and `affinity` constraints for a
//! declarative scheduler, with a knowledge base that remembers constraints
//! across runs and an explainability report.

pub mod adapter;
pub mod bench;
pub mod engine;
pub mod error;
pub mod estimation;
pub mod explain;
pub mod ingest;
pub mod kb;
pub mod model;
pub mod pipeline;
pub mod ranker;
pub mod scenario;

pub use error::{Error, Result};
