//! HyperSAGE: inductive two-level neural message passing on hypergraphs.
//!
//! Information propagates in two stages: a power-mean aggregation inside each
//! hyperedge, followed by a cardinality-weighted power-mean across a node's
//! incident hyperedges. The crate bundles the hypergraph data model, the
//! aggregation kernels, a small reverse-mode gradient engine, the layered
//! model, dataset IO, and the training/evaluation protocols used by the
//! `hypersage` command-line tool.

pub mod aggregation;
pub mod datasets;
pub mod hypergraph;
pub mod matrix;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod synth;
pub mod train;

pub use aggregation::{AggregationError, AggregatorConfig, Mode};
pub use hypergraph::{EdgeId, Hypergraph, HypergraphError, NeighborhoodQuery, NodeId, SplitPlan};
pub use matrix::Matrix;
pub use model::{AggregationSemantics, ForwardConfig, ModelParams};
pub use numerics::{NumericsError, Tape, TensorId};
