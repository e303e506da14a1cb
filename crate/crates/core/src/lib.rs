#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod expcli;
pub mod exact;
pub mod krylov;
pub mod linalg;
pub mod montecarlo;
pub mod reservoir;
pub mod rng;
pub mod subspace;

pub use error::{McError, Result};
