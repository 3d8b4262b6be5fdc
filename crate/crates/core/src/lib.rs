//! Differentiable decision trees for tabular data.
//!
//! A tree is expressed as a small neural network: each feature passes through
//! a soft binning layer (a one-layer softmax over learned cut points), the
//! per-feature bin vectors are combined into a leaf distribution by an outer
//! product, and a linear layer maps leaves to class scores. The whole thing
//! trains with gradient descent, yet at low temperature it rounds to an
//! ordinary axis-aligned decision tree that can be printed and inspected.
//!
//! The crate also carries the supporting cast: a minimal reverse-mode
//! autodiff graph ([`autodiff`]), a greedy CART learner for comparison
//! ([`cart`]), random-subspace forests for wide datasets ([`forest`]),
//! interpretability analyses ([`analysis`]), and CSV data handling
//! ([`data`]).

pub mod analysis;
pub mod autodiff;
pub mod binning;
pub mod cart;
pub mod data;
pub mod error;
pub mod forest;
pub mod model;
pub mod train;

mod dot;
mod util;

pub use error::{Error, Result};
