#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod asymptotic;
pub mod benchmarks;
pub mod channel;
pub mod config;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod mse;
pub mod zf;

pub use error::{DdamError, Result};
