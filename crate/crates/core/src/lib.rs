// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod error;
pub mod matlib;
pub mod odeflow;
pub mod sflow;
pub mod systems;
pub mod toruscan;

pub use error::{Error, Result};
