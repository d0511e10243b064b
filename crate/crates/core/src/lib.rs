//! Strongly convergent inertial projective splitting for structured monotone
//! inclusions `0 ∈ Σᵢ Gᵢ* Tᵢ(Gᵢ z)`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod operators;
pub mod problems;
pub mod product_space;
pub mod projection;
pub mod separator;
pub mod solver;
pub mod variants;

mod serde_vec;

pub use error::{Error, Result};
