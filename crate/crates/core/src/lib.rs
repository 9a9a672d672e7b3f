//! Binary classification from pairwise comparison data.
//!
//! Each training pair `(x, x')` records that `x` is more likely positive
//! than `x'`. Splitting the pairs yields a noisy-positive and a
//! noisy-negative pointwise set; the estimators in [`estimator`] turn those
//! sets into risks that can be minimized with an ordinary classifier.

pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod io;
pub mod loss;
pub mod model;
pub mod prior;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use prior::ClassPrior;
