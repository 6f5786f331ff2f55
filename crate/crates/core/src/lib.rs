//! RFQ fill-probability modelling and quote optimization.
//!
//! The crate is organised as a pipeline:
//!
//! * [`market_sim`] synthesizes RFQ records from simulated level-1 books;
//! * [`features`] turns records into model inputs and empirical fill-rate curves;
//! * [`bnt`], [`linear_models`] and [`ensemble`] estimate `P(fill)`;
//! * [`evaluation`] scores and cross-validates them;
//! * [`pricing`] picks the quote that maximizes expected payoff;
//! * [`io`] and [`cli`] persist artifacts and drive the pipeline.

// validation uses `!(x > 0.0)` so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bnt;
pub mod cli;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod io;
pub mod linear_models;
pub mod market_sim;
pub mod math;
pub mod pipeline;
pub mod pricing;
mod spline;

pub use error::{Error, Result};
