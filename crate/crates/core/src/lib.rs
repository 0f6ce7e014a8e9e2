//! Joint entity and relation extraction as graph structure learning.
//!
//! The pipeline: enumerate candidate spans of a sentence, score and select
//! top-K spans as nodes and top-K directed span pairs as edges of a noisy
//! initial graph, refine node and edge tokens with a graph transformer (or a
//! message-passing baseline), edit the graph by keep/drop decisions, and
//! classify the surviving nodes and edges into the final typed IE graph.
//!
//! This crate is `no_std` (with `alloc`) and holds everything algorithmic:
//! the autograd engine, the model, losses and optimizer, decoding, metrics,
//! and a synthetic corpus generator. File formats, checkpoints, and the CLI
//! live in the companion `textgraph` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod autograd;
pub mod config;
pub mod data;
pub mod edit;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod mpgnn;
pub mod nn;
pub mod num;
pub mod optim;
pub mod params;
pub mod rng;
pub mod synth;
pub mod transformer;

pub use error::{Error, Result};
pub use matrix::Matrix;
