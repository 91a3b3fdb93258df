// `!(x > 0.0)` style checks deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifiers;
pub mod criteria;
pub mod cv;
pub mod error;
pub mod export;
pub mod features;
pub mod reweight;
pub mod sampling;
pub mod scenarios;
pub mod workflow;

pub use error::{Error, Result};
