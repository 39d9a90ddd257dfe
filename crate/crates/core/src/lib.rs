//! Random walks on ℤ killed by a Poisson system of mobile traps.
//!
//! The crate computes quenched and annealed survival probabilities by
//! three independent routes, samples the survival-conditioned path
//! measure by importance sampling, and measures local-time, range and
//! hole functionals of the walk.

// `!(x > 0.0)` is how parameters reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annealed;
pub mod error;
pub mod experiments;
pub mod gibbs;
pub mod harness;
pub mod par;
pub mod rng;
pub mod serde_f64;
pub mod stats;
pub mod trap;
pub mod walk;

pub use error::{Error, Result};
pub use rng::RngStream;
