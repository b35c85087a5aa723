//! Transient stability assessment toolkit.
//!
//! A classical-model simulator of the New England 39-bus system produces
//! labelled post-fault samples; a boosted oblivious-tree classifier with
//! gradient-density reweighting learns stability from them.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod eval_harness;
pub mod ghm_boost;
pub mod grid_case;

pub use error::{Error, Result};
pub mod transient_sim;
pub mod util;
