//! Leave-one-out cross-validation of ridge regression: closed-form loss and
//! derivatives along the regularization path, a quasiconvexity classifier,
//! assumption diagnostics, random problem generators and experiment runners.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod loocv;
pub mod model;
pub mod qvx;
pub mod samplers;
pub mod stats;
pub mod util;

pub use error::{Error, Result};
