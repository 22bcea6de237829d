//! Guide doc-tests: every chapter under `book/src` is compiled and run here.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/velocity_grids.md")]
pub mod velocity_grids {}

#[doc = include_str!("../../../book/src/collision.md")]
pub mod collision {}

#[doc = include_str!("../../../book/src/paired_runs.md")]
pub mod paired_runs {}

#[doc = include_str!("../../../book/src/diagnostics.md")]
pub mod diagnostics {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[doc = include_str!("../../../book/src/schema.md")]
pub mod schema {}
