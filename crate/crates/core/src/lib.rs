//! Robust energy-to-peak filter synthesis for Lipschitz nonlinear descriptor systems.
#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(unused_imports))]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod augment;
pub mod error;
pub mod expr;
pub mod linalg;
pub mod lmi;
pub mod model;
pub mod sdp;
pub mod sim;
pub mod synthesis;

pub use error::{Error, ExprError, Result};
pub use linalg::{Mat, Vector};
