//! The chapters of the guide in `book/`, compiled so `cargo test` runs every
//! code listing as a doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}
#[doc = include_str!("../../../book/src/wheel.md")]
pub mod wheel {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/synthetic.md")]
pub mod synthetic {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
