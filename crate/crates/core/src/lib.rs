//! Block primal-dual optimization with asynchronous primal agents.
//!
//! The crate covers constrained convex problems with a Tikhonov-regularized
//! Lagrangian, certification of the step-size conditions, a synchronous
//! Uzawa reference solver, a deterministic simulator of asynchronous agents,
//! closed-form rate bounds with trace audits, and the construction showing
//! that disagreeing dual copies can push primal minimizers arbitrarily far
//! apart.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod counterexample;
pub mod error;
pub mod presets;
pub mod problem;
pub mod rates;
pub mod sim;
pub mod uzawa;

pub use error::{Error, Result};
pub use problem::{BoxSet, ConvexProblem, DualBox, ProblemSpec};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/problems.md")]
    mod problems {}
    #[doc = include_str!("../../../book/src/uzawa.md")]
    mod uzawa {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
    #[doc = include_str!("../../../book/src/rates.md")]
    mod rates {}
    #[doc = include_str!("../../../book/src/counterexample.md")]
    mod counterexample {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
