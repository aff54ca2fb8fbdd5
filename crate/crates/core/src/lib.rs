//! Core library for structure-aware graph tokenization and GNN-to-MLP
//! distillation.
//!
//! Everything in this crate is pure computation over in-memory data:
//! a small dense tensor engine with reverse-mode autodiff, graph
//! containers and splits, the teacher GNN / student MLP forward passes,
//! the vector-quantized tokenizer objective, the code-based distillation
//! objective, and the evaluation metrics. File formats, checkpoints and
//! the CLI live in the companion `graphvq` crate.
//!
//! The crate is `no_std` (with `alloc`) so the numeric core stays free of
//! platform dependencies; all randomness is explicit and seeded.

#![no_std]

extern crate alloc;

pub mod adam;
pub mod autodiff;
pub mod distill;
pub mod eval;
pub mod gnn;
pub mod graph;
pub mod rng;
pub mod sample;
pub mod split;
pub mod synth;
pub mod tensor;
pub mod tokenizer;

pub use tensor::{Real, Tensor};
