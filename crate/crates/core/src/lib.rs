//! Solution-guided API planning over a scholarly API library.
//!
//! The pipeline: an API [`registry`] is turned into a coupling [`graph`];
//! walking the graph yields [`solutions`]; the [`forge`] binds solutions to
//! questions, compiles gold [`plan`]s and checks them against a synthetic
//! [`corpus`]; the [`agent`] answers questions through an [`llm`] backend;
//! [`eval`] grades the transcripts.

pub mod agent;
pub mod client;
pub mod corpus;
pub mod eval;
pub mod forge;
pub mod graph;
pub mod llm;
pub mod plan;
pub mod registry;
pub mod solutions;
pub mod util;
