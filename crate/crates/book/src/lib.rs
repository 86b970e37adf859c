//! Compiles the guide's code snippets as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/toppling.md")]
pub mod toppling {}

#[doc = include_str!("../../../book/src/burning.md")]
pub mod burning {}

#[doc = include_str!("../../../book/src/trapped-walks.md")]
pub mod trapped_walks {}

#[doc = include_str!("../../../book/src/green.md")]
pub mod green {}

#[doc = include_str!("../../../book/src/sources.md")]
pub mod sources {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}

#[doc = include_str!("../../../README.md")]
pub mod readme {}
