// Range checks are written as !(x > 0.0) so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod harmonics;
pub mod quadrature;
pub mod sampling;
pub mod sensing;
pub mod solver;
pub mod surface;
pub mod verify;

pub use error::{Error, Result};
