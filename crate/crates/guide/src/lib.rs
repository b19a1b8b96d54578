//! The book's chapters as modules, so `cargo test` runs every listing.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/networks.md")]
pub mod networks {}
#[doc = include_str!("../../../book/src/averaging.md")]
pub mod averaging {}
#[doc = include_str!("../../../book/src/single-edges.md")]
pub mod single_edges {}
#[doc = include_str!("../../../book/src/multiple-edges.md")]
pub mod multiple_edges {}
#[doc = include_str!("../../../book/src/stabilization.md")]
pub mod stabilization {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
