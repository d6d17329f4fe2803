//! The guide in `book/` compiled as documentation, so every Rust snippet in
//! it runs as a doctest.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/boundaries.md")]
pub mod boundaries {}

#[doc = include_str!("../../../book/src/datasets.md")]
pub mod datasets {}

#[doc = include_str!("../../../book/src/decoding.md")]
pub mod decoding {}

#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}

#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}

#[doc = include_str!("../../../book/src/human-evaluation.md")]
pub mod human_evaluation {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
