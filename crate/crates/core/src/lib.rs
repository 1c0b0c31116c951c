//! Green's function Monte Carlo for spinless fermions in a finite square
//! well, with antisymmetry carried by a short-time exchange weight.
//!
//! The guide in `book/` walks through each module with runnable examples.

pub mod engine;
pub mod experiments;
pub mod guidance;
pub mod model;
pub mod oracle;
pub mod potentials;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
    #[doc = include_str!("../../../book/src/guidance.md")]
    mod guidance {}
    #[doc = include_str!("../../../book/src/potentials.md")]
    mod potentials {}
    #[doc = include_str!("../../../book/src/engine.md")]
    mod engine {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
