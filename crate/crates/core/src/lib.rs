//! Frame-based signal denoising with SURE-optimized shrinkage and
//! aggregation of orthonormal-basis estimates.

// `!(x > 0.0)` is used throughout to reject NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod bases;
pub mod bench;
pub mod diag_shrink;
pub mod error;
pub mod frame;
pub mod gabor;
pub mod linalg;
pub mod signals;
pub mod sure_rules;
pub mod testkit;

pub use error::{Error, Result};
pub use frame::{build_frame, FrameOperator};
