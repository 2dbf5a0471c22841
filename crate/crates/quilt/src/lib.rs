//! quilt: train one multi-label classifier from an assembly of partially
//! labeled datasets.
//!
//! Datasets annotated under different label schemas are merged into a single
//! corpus under the union of their schemas, with a tri-state label
//! (positive / negative / unknown) per class and sample. A small dense model
//! answers per-class questions through a dynamic adapter whose learnable task
//! encoding maps every class to a classifier vector; annotated entries train
//! with masked binary cross entropy while unannotated entries train with
//! sharpened pseudo-labels and weak/strong consistency.
//!
//! The narrative guide under `book/` walks through every subsystem; its code
//! snippets compile as doctests via the [`guide`] module.

pub mod cli;
pub mod data;
pub mod error;
pub mod loss;
pub mod eval;
pub mod guide;
pub mod experiment;
pub mod model;
pub mod train;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
