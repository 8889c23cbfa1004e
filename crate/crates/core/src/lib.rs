//! Knowledge-graph-to-corpus compiler.
//!
//! Turns a pipe-delimited terminology release (concept, relation, semantic-type
//! and semantic-group files) plus an optional free-text corpus into four
//! task-tagged pre-training corpora:
//!
//! * `mlm` - masked language modelling over free text,
//! * `ep`  - entity prediction (tail concept masked),
//! * `lp`  - link prediction over multi-hop paths (relation tokens hidden),
//! * `tc`  - triple classification with two negative-sampling strategies.
//!
//! The pipeline is deterministic for a fixed seed and every emitted corpus
//! ships with a manifest carrying counts, digests and task-weighting
//! coefficients for the mixed loss.

pub mod cache;
pub mod config;
pub mod corpus;
pub mod emit;
pub mod error;
pub mod freetext;
pub mod graph;
pub mod objective;
pub mod relation;
pub mod render;
pub mod rrf;
pub mod sampling;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
pub use graph::{Concept, FrozenGraph, GraphStatistics, KnowledgeGraph, Triple};
pub use relation::RelationType;
