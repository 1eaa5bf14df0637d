//! Knowledge- and reasoning-augmented legal case retrieval.

// `!(x > 0.0)` checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;

pub mod bm25;
pub mod context;
pub mod corpus;
pub mod elements;
pub mod gateway;
pub mod metrics;
pub mod pipeline;
pub mod templates;
pub mod trainer;
pub mod triplets;
pub mod util;
pub mod vector_index;

pub use error::{Error, Result};
