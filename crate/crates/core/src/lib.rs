//! Surrogate-assisted many-objective optimisation of floating-zone silicon
//! crystal growth.
//!
//! The crate implements the whole loop: a Latin hypercube design over twelve
//! process parameters ([`space`]), a ground-truth simulator stand-in
//! ([`oracle`], [`dataset`]), a deep-ensemble neural surrogate trained from
//! scratch ([`neural`], [`ensemble`]), eight constrained objectives
//! ([`objectives`]), NSGA-II and NSGA-III ([`nsga`]), and the reporting and
//! validation of Pareto-optimal candidates ([`report`]). [`pipeline`] wires the
//! stages together behind a versioned run configuration.

pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod hpo;
mod io;
pub mod neural;
pub mod nsga;
pub mod objectives;
pub mod oracle;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod space;

pub use error::{Error, ErrorKind, Result};

/// The guide's code listings, compiled and run as doc tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/design.md")]
    mod design {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
    #[doc = include_str!("../../../book/src/surrogate.md")]
    mod surrogate {}
    #[doc = include_str!("../../../book/src/architecture_search.md")]
    mod architecture_search {}
    #[doc = include_str!("../../../book/src/objectives.md")]
    mod objectives {}
    #[doc = include_str!("../../../book/src/optimisation.md")]
    mod optimisation {}
    #[doc = include_str!("../../../book/src/reporting.md")]
    mod reporting {}
    #[doc = include_str!("../../../book/src/command_line.md")]
    mod command_line {}
}
