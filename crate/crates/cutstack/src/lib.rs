//! Cutting-and-stacking constructions of odometer towers whose normalized Birkhoff
//! sums converge in distribution to a prescribed law, with exact certification of the
//! partial-sum distributions along the way.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blocks;
pub mod config;
pub mod dist;
pub mod engine;
pub mod error;
pub mod manifest;
pub mod scalar;
pub mod skyscraper;
pub mod splitting;
pub mod tower;
pub(crate) mod window;

pub use error::{Error, Result};
pub use scalar::{Mode, Rational, Scalar};
