#![no_std]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod corrector;
pub mod diagnostics;
pub mod effective;
pub mod error;
pub mod galerkin;
pub mod linalg;
pub mod medium;
pub mod sde;

pub use error::{Error, Result};
