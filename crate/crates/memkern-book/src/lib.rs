//! mdbook cannot run a book's code listings as tests, so this crate smushes
//! every chapter into rustdoc via `include_str!` and lets `cargo test --doc`
//! do the work. One module per chapter keeps failures attributable.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/states.md")]
pub mod states {}

#[doc = include_str!("../../../book/src/superoperators.md")]
pub mod superoperators {}

#[doc = include_str!("../../../book/src/memory_kernel.md")]
pub mod memory_kernel {}

#[doc = include_str!("../../../book/src/collision_models.md")]
pub mod collision_models {}

#[doc = include_str!("../../../book/src/laplace.md")]
pub mod laplace {}

#[doc = include_str!("../../../book/src/verification.md")]
pub mod verification {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
