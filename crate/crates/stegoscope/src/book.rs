//! The user guide, wired into the test suite.
//!
//! Each chapter of the mdbook under `book/` is attached here as module
//! documentation, so `cargo test` compiles and runs every code sample in
//! the guide. The rendered book and the crate cannot drift apart without
//! a test failing.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/images.md")]
pub mod images {}

#[doc = include_str!("../../../book/src/synthetic_sources.md")]
pub mod synthetic_sources {}

#[doc = include_str!("../../../book/src/embedding.md")]
pub mod embedding {}

#[doc = include_str!("../../../book/src/features.md")]
pub mod features {}

#[doc = include_str!("../../../book/src/ensemble.md")]
pub mod ensemble {}

#[doc = include_str!("../../../book/src/detection.md")]
pub mod detection {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
