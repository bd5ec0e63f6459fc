//! Knowledge-enhanced cross-modal graph pipeline for predicting asset price
//! movement and volatility from monetary-policy call transcripts.
//!
//! The pipeline links transcript tokens to a timestamped knowledge graph,
//! builds a graph over token, knowledge, video and audio nodes, propagates
//! it through a stack of GCN layers and reads out 24 (asset, horizon)
//! predictions per task.

pub mod corpus;
pub mod evaluation;
pub mod graph_builder;
pub mod instruct_export;
pub mod kg_store;
pub mod model;
pub mod numerics;
