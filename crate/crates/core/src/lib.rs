// Negated comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod montecarlo;
pub mod process;
pub mod rng;
pub mod second_order;
pub mod stats;

pub use error::{Error, Result};
