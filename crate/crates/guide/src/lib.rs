//! The guide in `book/` compiled as doc tests, one module per chapter, so
//! every Rust snippet in it runs under `cargo test`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/autodiff.md")]
pub mod autodiff {}
#[doc = include_str!("../../../book/src/amrf.md")]
pub mod amrf {}
#[doc = include_str!("../../../book/src/attention.md")]
pub mod attention {}
#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
