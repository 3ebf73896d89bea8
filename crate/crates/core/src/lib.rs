//! Monte Carlo verification of central limit theorems and Berry-Esseen rates
//! for statistics of random points of `l_p` balls: norms of random
//! projections and `l_q` norms.
//!
//! The production sampling path never forms an `n`-dimensional rotation: a
//! projection norm is a function of a few sums over p-Gaussian draws and two
//! chi-square variables. A direct Haar-frame sampler is kept as an oracle.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod bounds;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod ks;
pub mod numerics;
pub mod rng;
pub mod samplers;
pub mod stats;
pub mod validation;

pub use analytic::{PIndex, ProjectionVariant};
pub use error::{Error, Result};
pub use exec::Executor;
pub use rng::RngStream;
pub use samplers::{Mode, ModelSpec, WSpec};
