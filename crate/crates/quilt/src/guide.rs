//! The narrative guide, one module per chapter of the book under `book/`.
//!
//! Including the chapters here compiles every code block in the book as a
//! doctest, so `cargo test --doc` keeps the guide and the library in sync.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/assembly.md")]
pub mod assembly {}

#[doc = include_str!("../../../book/src/autodiff.md")]
pub mod autodiff {}

#[doc = include_str!("../../../book/src/adapter.md")]
pub mod adapter {}

#[doc = include_str!("../../../book/src/losses.md")]
pub mod losses {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
